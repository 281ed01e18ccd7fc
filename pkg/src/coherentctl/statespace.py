"""Complex state-space models and their frequency-domain algebra.

A model is the quadruple (A, B, C, D) of complex matrices with transfer
matrix ``G(s) = C (sI - A)^{-1} B + D``, continuous time throughout.  No
realness is assumed anywhere: quantum input-output models in doubled-up
(annihilation/creation) coordinates have genuinely complex coefficient
matrices, so every operation here is written for ``complex128``.

Alongside the composition algebra (series, parallel, stacking, feedback
interconnection, inverse, adjoint conjugation) the module carries the
structural helpers used by the quantum layers: doubled-up matrices
``[[R1, R2], [conj(R2), conj(R1)]]`` and the signature (Krein) matrix
``diag(I_r, -I_r)``.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from .errors import DimensionMismatch, IllPosedInterconnection, SingularResolvent

__all__ = [
    "StateSpace",
    "static_gain",
    "identity_system",
    "zero_system",
    "series",
    "parallel",
    "hstack_systems",
    "vstack_systems",
    "blockdiag_systems",
    "conjugate_system",
    "invert_system",
    "compose_lft",
    "minimal_realization",
    "doubled",
    "signature_matrix",
    "is_doubled",
    "log_grid",
    "validate_grid",
]


def _as_complex_matrix(m, rows=None, cols=None, name="matrix"):
    arr = np.atleast_2d(np.asarray(m, dtype=np.complex128))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionMismatch(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionMismatch(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


class StateSpace:
    """Complex continuous-time state-space model.

    Parameters
    ----------
    a : (n, n) array_like
        State matrix.
    b : (n, m) array_like
        Input matrix.  For a static model pass a ``(0, m)`` array.
    c : (p, n) array_like
        Output matrix.
    d : (p, m) array_like
        Feedthrough.

    Notes
    -----
    Instances are immutable by convention; all algebra returns new
    objects.  ``@`` composes transfer matrices in written order, i.e.
    ``(G @ H)(s) = G(s) H(s)``, and ``+``/``-`` act pointwise on
    responses.
    """

    def __init__(self, a, b, c, d):
        a = _as_complex_matrix(a, name="a")
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"a must be square, got {a.shape}")
        n = a.shape[0]
        b = _as_complex_matrix(b, rows=n, name="b")
        c = _as_complex_matrix(c, cols=n, name="c")
        d = _as_complex_matrix(d, rows=c.shape[0], cols=b.shape[1], name="d")
        self.a, self.b, self.c, self.d = a, b, c, d

    # -- basic queries -------------------------------------------------

    @property
    def n_states(self):
        return self.a.shape[0]

    @property
    def n_inputs(self):
        return self.b.shape[1]

    @property
    def n_outputs(self):
        return self.c.shape[0]

    @property
    def shape(self):
        return (self.n_outputs, self.n_inputs)

    def __repr__(self):
        return (
            f"StateSpace(n_states={self.n_states}, "
            f"n_outputs={self.n_outputs}, n_inputs={self.n_inputs})"
        )

    def poles(self):
        return np.linalg.eigvals(self.a)

    # -- evaluation ----------------------------------------------------

    def freq_response(self, omega):
        """Transfer matrix value at ``s = i*omega`` for one real frequency.

        Raises
        ------
        SingularResolvent
            If ``i*omega`` is (numerically) an eigenvalue of A.
        """
        if self.n_states == 0:
            return self.d.copy()
        t = 1j * float(omega) * np.eye(self.n_states) - self.a
        sv = np.linalg.svd(t, compute_uv=False)
        if sv[-1] <= 1e-12 * max(sv[0], 1.0):
            raise SingularResolvent(
                f"resolvent singular at omega={omega!r} "
                f"(sigma_min/sigma_max = {sv[-1] / max(sv[0], 1e-300):.2e})"
            )
        return self.c @ np.linalg.solve(t, self.b) + self.d

    def response(self, omegas):
        """Responses stacked over a grid: an ``(n_omega, p, m)`` array."""
        omegas = np.asarray(omegas, dtype=np.float64).ravel()
        try:
            out = _accel.freq_sweep(self.a, self.b, self.c, self.d, omegas)
        except np.linalg.LinAlgError as exc:
            raise SingularResolvent(
                "resolvent singular at a grid frequency"
            ) from exc
        if out.size and not np.all(np.isfinite(out)):
            raise SingularResolvent("non-finite response on grid (near-singular resolvent)")
        return out

    # -- algebra -------------------------------------------------------

    def __matmul__(self, other):
        """Series composition in written order: ``(G @ H)(s) = G(s) H(s)``."""
        if not isinstance(other, StateSpace):
            return NotImplemented
        if self.n_inputs != other.n_outputs:
            raise DimensionMismatch(
                f"cannot compose {self.shape} with {other.shape}"
            )
        ng, nh = self.n_states, other.n_states
        a = np.block(
            [
                [self.a, self.b @ other.c],
                [np.zeros((nh, ng), dtype=np.complex128), other.a],
            ]
        )
        b = np.vstack([self.b @ other.d, other.b])
        c = np.hstack([self.c, self.d @ other.c])
        d = self.d @ other.d
        return StateSpace(a, b, c, d)

    def __add__(self, other):
        if not isinstance(other, StateSpace):
            return NotImplemented
        if self.shape != other.shape:
            raise DimensionMismatch(f"cannot add {self.shape} and {other.shape}")
        n1, n2 = self.n_states, other.n_states
        a = np.block(
            [
                [self.a, np.zeros((n1, n2), dtype=np.complex128)],
                [np.zeros((n2, n1), dtype=np.complex128), other.a],
            ]
        )
        b = np.vstack([self.b, other.b])
        c = np.hstack([self.c, other.c])
        return StateSpace(a, b, c, self.d + other.d)

    def __neg__(self):
        return StateSpace(self.a, self.b, -self.c, -self.d)

    def __sub__(self, other):
        if not isinstance(other, StateSpace):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar):
        scalar = complex(scalar)
        return StateSpace(self.a, self.b, scalar * self.c, scalar * self.d)

    __rmul__ = __mul__

    def conjugate(self):
        """Adjoint system ``G~(s) = G(-conj(s))*`` with realization
        ``(-A*, -C*, B*, D*)``.  On the imaginary axis this is the
        pointwise conjugate transpose: ``G~(iw) = G(iw)*``."""
        return StateSpace(
            -self.a.conj().T, -self.c.conj().T, self.b.conj().T, self.d.conj().T
        )

    def select(self, rows=None, cols=None):
        """Subsystem keeping the given output rows / input columns."""
        rows = slice(None) if rows is None else rows
        cols = slice(None) if cols is None else cols
        return StateSpace(self.a, self.b[:, cols], self.c[rows], self.d[rows][:, cols])


def static_gain(d):
    """Model with no states: ``G(s) = D`` identically."""
    d = _as_complex_matrix(d, name="d")
    z = np.zeros((0, 0), dtype=np.complex128)
    return StateSpace(
        z,
        np.zeros((0, d.shape[1]), dtype=np.complex128),
        np.zeros((d.shape[0], 0), dtype=np.complex128),
        d,
    )


def identity_system(k):
    return static_gain(np.eye(k))


def zero_system(p, m):
    return static_gain(np.zeros((p, m)))


def series(first, then):
    """Signal-flow series: output of ``first`` feeds ``then``.

    Equals ``then @ first`` — the response is ``then(iw) @ first(iw)``.
    """
    return then @ first


def parallel(g, h):
    return g + h


def conjugate_system(sys):
    return sys.conjugate()


def hstack_systems(systems):
    """Input concatenation ``[G1 G2 ...]`` (shared outputs)."""
    systems = list(systems)
    p = systems[0].n_outputs
    for g in systems:
        if g.n_outputs != p:
            raise DimensionMismatch("hstack requires equal output counts")
    import scipy.linalg as sla

    a = sla.block_diag(*[g.a for g in systems]).astype(np.complex128)
    b = sla.block_diag(*[g.b for g in systems]).astype(np.complex128)
    c = np.hstack([g.c for g in systems])
    d = np.hstack([g.d for g in systems])
    return StateSpace(a, b, c, d)


def vstack_systems(systems):
    """Output concatenation ``[G1; G2; ...]`` (shared inputs)."""
    systems = list(systems)
    m = systems[0].n_inputs
    for g in systems:
        if g.n_inputs != m:
            raise DimensionMismatch("vstack requires equal input counts")
    import scipy.linalg as sla

    a = sla.block_diag(*[g.a for g in systems]).astype(np.complex128)
    b = np.vstack([g.b for g in systems])
    c = sla.block_diag(*[g.c for g in systems]).astype(np.complex128)
    d = np.vstack([g.d for g in systems])
    return StateSpace(a, b, c, d)


def blockdiag_systems(systems):
    """Diagonal concatenation ``diag(G1, G2, ...)`` of responses."""
    systems = list(systems)
    import scipy.linalg as sla

    a = sla.block_diag(*[g.a for g in systems]).astype(np.complex128)
    b = sla.block_diag(*[g.b for g in systems]).astype(np.complex128)
    c = sla.block_diag(*[g.c for g in systems]).astype(np.complex128)
    d = sla.block_diag(*[g.d for g in systems]).astype(np.complex128)
    return StateSpace(a, b, c, d)


def invert_system(sys, tol=1e-12):
    """Inverse system ``G(s)^{-1}``; requires an invertible feedthrough."""
    if sys.n_inputs != sys.n_outputs:
        raise DimensionMismatch("only square systems can be inverted")
    d = sys.d
    sv = np.linalg.svd(d, compute_uv=False) if d.size else np.array([0.0])
    if d.shape[0] == 0:
        return static_gain(np.zeros((0, 0)))
    if sv[-1] <= tol * max(sv[0], 1.0):
        raise IllPosedInterconnection(
            f"feedthrough is singular (sigma_min = {sv[-1]:.2e}); inverse is improper"
        )
    dinv = np.linalg.inv(d)
    return StateSpace(
        sys.a - sys.b @ dinv @ sys.c,
        sys.b @ dinv,
        -dinv @ sys.c,
        dinv,
    )


def compose_lft(plant, controller, n_meas, n_ctrl):
    """Close the lower loop of a partitioned plant with a controller.

    The last ``n_meas`` plant outputs feed the controller, whose output
    drives the last ``n_ctrl`` plant inputs.  Returns the map from the
    remaining (exogenous) inputs to the remaining (performance) outputs:

        ``G = P11 + P12 K (I - P22 K)^{-1} P21``

    Raises
    ------
    IllPosedInterconnection
        If ``I - D22 DK`` is singular (algebraic loop).
    """
    p, m = plant.shape
    if not (0 <= n_meas <= p and 0 <= n_ctrl <= m):
        raise DimensionMismatch("partition exceeds plant dimensions")
    if controller.shape != (n_ctrl, n_meas):
        raise DimensionMismatch(
            f"controller must be ({n_ctrl}, {n_meas}), got {controller.shape}"
        )
    nz, nw = p - n_meas, m - n_ctrl
    a, bmat, cmat, dmat = plant.a, plant.b, plant.c, plant.d
    b1, b2 = bmat[:, :nw], bmat[:, nw:]
    c1, c2 = cmat[:nz], cmat[nz:]
    d11, d12 = dmat[:nz, :nw], dmat[:nz, nw:]
    d21, d22 = dmat[nz:, :nw], dmat[nz:, nw:]
    ak, bk, ck, dk = controller.a, controller.b, controller.c, controller.d

    loop = np.eye(n_meas) - d22 @ dk
    sv = np.linalg.svd(loop, compute_uv=False) if loop.size else np.array([1.0])
    if loop.size and sv[-1] <= 1e-12 * max(sv[0], 1.0):
        raise IllPosedInterconnection(
            "algebraic loop: I - D22*DK is singular"
        )
    x = np.linalg.inv(loop) if loop.size else loop
    y = np.eye(n_ctrl) - dk @ d22
    yinv = np.linalg.inv(y) if y.size else y

    acl = np.block(
        [
            [a + b2 @ dk @ x @ c2, b2 @ yinv @ ck],
            [bk @ x @ c2, ak + bk @ x @ d22 @ ck],
        ]
    )
    bcl = np.vstack([b1 + b2 @ dk @ x @ d21, bk @ x @ d21])
    ccl = np.hstack([c1 + d12 @ dk @ x @ c2, d12 @ yinv @ ck])
    dcl = d11 + d12 @ dk @ x @ d21
    return StateSpace(acl, bcl, ccl, dcl)


# -- minimal realization ----------------------------------------------


def _orth_columns(m, tol, floor):
    """Orthonormal basis of the column space, SVD rank decision.

    Singular values at or below ``tol * max(s[0], floor)`` count as zero;
    the floor keeps residues of exact cancellations (entries at roundoff
    relative to the system scale) from faking full rank.
    """
    if m.size == 0:
        return np.zeros((m.shape[0], 0), dtype=np.complex128)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[0], 0), dtype=np.complex128)
    rank = int(np.sum(s > tol * max(s[0], floor)))
    return u[:, :rank]


def _reachable_basis(a, b, tol, floor):
    """Basis of the smallest A-invariant subspace containing range(B)."""
    v = _orth_columns(b, tol, floor)
    while v.shape[1] < a.shape[0]:
        w = _orth_columns(np.hstack([v, a @ v]), tol, floor)
        if w.shape[1] == v.shape[1]:
            break
        v = w
    return v


def minimal_realization(sys, tol=1e-9):
    """Remove unreachable and unobservable states.

    Uses the orthogonal staircase construction: restrict to the smallest
    A-invariant subspace containing range(B), then dualize for
    observability.  ``tol`` is the relative SVD rank threshold, measured
    against the realization's overall scale.

    The returned model has the same transfer matrix (up to the rank
    decisions) with ``n_states`` less than or equal to the original.
    """
    a, b, c, d = sys.a, sys.b, sys.c, sys.d
    scale = max(
        (float(np.abs(m).max()) for m in (a, b, c) if m.size),
        default=0.0,
    )
    scale = max(scale, 1e-300)
    if sys.n_states:
        v = _reachable_basis(a, b, tol, scale)
        a, b, c = v.conj().T @ a @ v, v.conj().T @ b, c @ v
    if a.shape[0]:
        w = _reachable_basis(a.conj().T, c.conj().T, tol, scale)
        a, b, c = w.conj().T @ a @ w, w.conj().T @ b, c @ w
    return StateSpace(a, b, c, d)


# -- doubled-up structure ----------------------------------------------


def doubled(r1, r2):
    """Doubled-up matrix ``[[R1, R2], [conj(R2), conj(R1)]]``."""
    r1 = np.atleast_2d(np.asarray(r1, dtype=np.complex128))
    r2 = np.atleast_2d(np.asarray(r2, dtype=np.complex128))
    if r1.shape != r2.shape:
        raise DimensionMismatch("doubled-up blocks must share a shape")
    return np.block([[r1, r2], [r2.conj(), r1.conj()]])


def signature_matrix(r):
    """Krein-space signature ``diag(I_r, -I_r)`` of order ``2r``."""
    j = np.eye(2 * r, dtype=np.complex128)
    j[r:, r:] *= -1.0
    return j


def is_doubled(mat, tol=1e-10):
    """Check the doubled-up block symmetry of a ``2p x 2q`` matrix."""
    mat = np.asarray(mat)
    p, q = mat.shape[0] // 2, mat.shape[1] // 2
    if mat.shape != (2 * p, 2 * q):
        return False
    scale = max(np.abs(mat).max(), 1.0)
    return (
        np.abs(mat[p:, q:] - mat[:p, :q].conj()).max() <= tol * scale
        and np.abs(mat[p:, :q] - mat[:p, q:].conj()).max() <= tol * scale
    )


# -- frequency grids ---------------------------------------------------


def log_grid(lo, hi, points):
    """Logarithmically spaced positive frequency grid."""
    if not (0.0 < lo < hi):
        raise ValueError("need 0 < lo < hi for a log grid")
    return np.logspace(np.log10(lo), np.log10(hi), int(points))


def validate_grid(omegas):
    """Validate a frequency grid: 1-D, finite, strictly increasing."""
    omegas = np.asarray(omegas, dtype=np.float64).ravel()
    if omegas.size == 0:
        raise ValueError("frequency grid is empty")
    if not np.all(np.isfinite(omegas)):
        raise ValueError("frequency grid contains non-finite points")
    if omegas.size > 1 and not np.all(np.diff(omegas) > 0):
        raise ValueError("frequency grid must be strictly increasing")
    return omegas
