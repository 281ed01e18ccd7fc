"""Feasibility structure of the stable controller parameter.

A doubled-up controller is physically meaningful only when its transfer
matrix is (J, J)-unitary on the imaginary axis.  Pulled back through the
controller parameterization K = (U + M Q)(V + N Q)^{-1}, that condition
becomes a quadratic equation in the stable parameter Q,

    Phi + Q~ Lambda + Lambda~ Q + Q~ Pi Q = 0,

whose coefficients depend only on the coprime factor family.  This
module assembles those coefficients, evaluates the residual, classifies
parameters (stabilizing vs. physically realizable), projects descent
directions onto the tangent subspace of the feasible set, and restores
feasibility with a Gauss-Newton refinement.

Parameters live in the fixed rational basis {1, (s+b)^-1, ..., (s+b)^-K}
with matrix coefficients, so every subspace computation is a finite
real-linear least-squares problem over stacked coefficient unknowns.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, FeedthroughSingular, RankDeficientProjection
from .norms import is_hurwitz, is_spectrally_generic
from .stabilization import controller_from_parameter
from .statespace import (
    StateSpace,
    conjugate_system,
    doubled,
    log_grid,
    minimal_realization,
    signature_matrix,
    static_gain,
    validate_grid,
)

__all__ = [
    "ConstraintData",
    "YoulaParameter",
    "TangentSubspace",
    "MembershipVerdict",
    "build_constraint_data",
    "constraint_samples",
    "constraint_residual",
    "feedthrough_ok",
    "membership_qhat",
    "tangent_subspace",
    "project_direction",
    "restore_feasibility",
]

DEFAULT_BASIS_POLE = 1.0
DEFAULT_BASIS_ORDER = 8


# -- parameter basis -------------------------------------------------------


@dataclass
class YoulaParameter:
    """Stable transfer matrix in the basis {1, (s+b)^-1, ..., (s+b)^-K}.

    ``coeffs`` has shape (K+1, rows, cols); entry 0 is the feedthrough
    coefficient.  The basis pole ``b`` must be positive so that every
    basis function (and hence the parameter itself) is stable and
    proper by construction.
    """

    basis_pole: float
    coeffs: np.ndarray

    def __post_init__(self):
        self.basis_pole = float(self.basis_pole)
        if not self.basis_pole > 0.0:
            raise ValueError(f"basis pole must be positive, got {self.basis_pole}")
        arr = np.asarray(self.coeffs, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError(
                f"coefficients must be a (order+1, rows, cols) stack, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficients must be finite")
        self.coeffs = arr

    @property
    def order(self):
        return self.coeffs.shape[0] - 1

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @classmethod
    def zero(cls, shape, basis_pole=DEFAULT_BASIS_POLE, order=DEFAULT_BASIS_ORDER):
        if np.isscalar(shape):
            shape = (int(shape), int(shape))
        return cls(basis_pole, np.zeros((order + 1, *shape), dtype=np.complex128))

    def basis(self, omegas):
        """Basis values (n_omega, order+1): column k is (i w + b)^-k."""
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        decay = 1.0 / (1j * omegas + self.basis_pole)
        return decay[:, None] ** np.arange(self.order + 1)[None, :]

    def evaluate(self, omegas):
        """Pointwise values on the imaginary axis, shape (n_omega, rows, cols)."""
        return np.einsum("wk,kab->wab", self.basis(omegas), self.coeffs)

    def to_statespace(self):
        """Exact realization: one chain of ``order`` integrator blocks.

        The state blocks hold u/(s+b), u/(s+b)^2, ... so A is block
        lower-bidiagonal with -b on the diagonal and identity couplings
        below it.
        """
        k, (rows, cols) = self.order, self.shape
        if k == 0:
            return static_gain(self.coeffs[0])
        eye = np.eye(cols)
        a = sla.block_diag(*([-self.basis_pole * eye] * k)).astype(np.complex128)
        for blk in range(1, k):
            a[blk * cols : (blk + 1) * cols, (blk - 1) * cols : blk * cols] = eye
        b = np.zeros((k * cols, cols), dtype=np.complex128)
        b[:cols] = eye
        c = np.hstack([self.coeffs[j] for j in range(1, k + 1)])
        return StateSpace(a, b, c, self.coeffs[0])

    @classmethod
    def fit(
        cls,
        values,
        omegas,
        basis_pole=DEFAULT_BASIS_POLE,
        order=DEFAULT_BASIS_ORDER,
    ):
        """Least-squares fit of samples (or a system) on a frequency grid.

        ``values`` is either a StateSpace model, sampled internally, or
        an array of shape (n_omega, rows, cols).  The fit is linear in
        the coefficients and solved per matrix entry.
        """
        omegas = validate_grid(omegas)
        if isinstance(values, StateSpace):
            values = values.response(omegas)
        values = np.asarray(values, dtype=np.complex128)
        if values.ndim != 3 or values.shape[0] != omegas.size:
            raise DimensionMismatch(
                f"sample block {values.shape} does not match grid of {omegas.size}"
            )
        template = cls.zero(values.shape[1:], basis_pole=basis_pole, order=order)
        basis = template.basis(omegas)
        flat, *_ = np.linalg.lstsq(basis, values.reshape(omegas.size, -1), rcond=None)
        return cls(basis_pole, flat.reshape(order + 1, *values.shape[1:]))


def _parameter_samples(q, omegas):
    if isinstance(q, YoulaParameter):
        return q.evaluate(omegas)
    return q.response(omegas)


# -- constraint coefficients ----------------------------------------------


@dataclass
class ConstraintData:
    """Coefficient systems of the quadratic feasibility form.

    ``phi`` is the constant block, ``lam`` the linear block, and ``pi``
    the quadratic block; all are square systems of the loop width 2*mu.
    ``phi`` and ``pi`` are self-conjugate, so their responses are
    Hermitian at every axis point.
    """

    phi: StateSpace
    lam: StateSpace
    pi: StateSpace
    mu: int

    def samples(self, omegas):
        """Responses (phi, lam, pi) on a grid, each (n_omega, 2mu, 2mu)."""
        omegas = validate_grid(omegas)
        return (
            self.phi.response(omegas),
            self.lam.response(omegas),
            self.pi.response(omegas),
        )


def build_constraint_data(cf, mu=None, check_grid=None):
    """Assemble the quadratic-form coefficients from a factor family.

    One conjugate-weighted composition of the right factor family yields
    all three blocks: with G = [[M, U], [N, V]] and the split signature
    diag(J, -J), the product G~ diag(J,-J) G contains the quadratic
    block (top-left), the linear block (top-right), and the constant
    block (bottom-right).  Self-conjugacy of the constant and quadratic
    blocks is verified on a small grid before returning.
    """
    d = cf.ctrl
    if cf.meas != d:
        raise DimensionMismatch(
            f"square controller loop required, got {cf.ctrl} x {cf.meas}"
        )
    if mu is None:
        if d % 2:
            raise DimensionMismatch(
                f"loop width {d} is not doubled; pass mu explicitly for odd widths"
            )
        mu = d // 2
    elif 2 * mu != d:
        raise DimensionMismatch(f"mu = {mu} inconsistent with loop width {d}")

    j = signature_matrix(mu)
    jbig = sla.block_diag(j, -j)
    fam = cf.right_family
    popov = conjugate_system(fam) @ static_gain(jbig) @ fam
    cd = ConstraintData(
        phi=popov.select(rows=slice(d, None), cols=slice(d, None)),
        lam=popov.select(rows=slice(0, d), cols=slice(d, None)),
        pi=popov.select(rows=slice(0, d), cols=slice(0, d)),
        mu=mu,
    )

    if check_grid is None:
        check_grid = log_grid(1e-2, 1e2, 17)
    phi_w, _, pi_w = cd.samples(check_grid)
    for label, block in (("constant", phi_w), ("quadratic", pi_w)):
        gap = np.abs(block - block.conj().swapaxes(1, 2)).max()
        scale = max(1.0, np.abs(block).max())
        if gap > 1e-8 * scale:
            raise ValueError(
                f"{label} block lost self-conjugacy (Hermitian gap {gap:.3e}); "
                "factor family is inconsistent"
            )
    return cd


def constraint_samples(cd, q, omegas):
    """Pointwise residual matrices of the quadratic form, (n_omega, d, d)."""
    omegas = validate_grid(omegas)
    phi_w, lam_w, pi_w = cd.samples(omegas)
    q_w = _parameter_samples(q, omegas)
    qh = q_w.conj().swapaxes(1, 2)
    cross = qh @ lam_w
    return phi_w + cross + cross.conj().swapaxes(1, 2) + qh @ pi_w @ q_w


def constraint_residual(cd, q, omegas=None):
    """Worst-case Frobenius norm of the quadratic form over the grid."""
    if omegas is None:
        from .stabilization import default_verification_grid

        omegas = default_verification_grid()
    r = constraint_samples(cd, q, omegas)
    return float(np.sqrt(np.sum(np.abs(r) ** 2, axis=(1, 2))).max())


def feedthrough_ok(cf, q, tol=1e-9):
    """Whether (V + N Q) keeps an invertible feedthrough."""
    q_inf = q.coeffs[0] if isinstance(q, YoulaParameter) else q.d
    dmat = cf.v_factor().d + cf.n_factor().d @ q_inf
    return bool(abs(np.linalg.det(dmat)) > tol)


# -- membership -----------------------------------------------------------


@dataclass(frozen=True)
class MembershipVerdict:
    """Itemized classification of a candidate parameter.

    ``in_q`` collects the stabilizing-parameter requirements (stable,
    invertible feedthrough, quadratic residual within tolerance);
    ``in_qhat`` additionally demands that the assembled controller has a
    spectrally generic A-matrix and a scattering-type feedthrough, i.e.
    that it is itself physically realizable.
    """

    stable_ok: bool
    feedthrough_ok: bool
    residual: float
    residual_ok: bool
    generic_ok: bool
    structure_gap: float
    scattering_gap: float
    structure_ok: bool

    @property
    def in_q(self):
        return self.stable_ok and self.feedthrough_ok and self.residual_ok

    @property
    def in_qhat(self):
        return self.in_q and self.generic_ok and self.structure_ok


def membership_qhat(cf, q, grid=None, tol=1e-6):
    """Classify a parameter: stabilizing only, or physically realizable.

    Checks run in order: parameter stability, feedthrough invertibility,
    quadratic residual on the grid, spectral genericity of the assembled
    controller (static controllers pass vacuously), and the doubled
    scattering structure of the controller's feedthrough.
    """
    if grid is None:
        from .stabilization import default_verification_grid

        grid = default_verification_grid()
    cd = build_constraint_data(cf)

    if isinstance(q, YoulaParameter):
        stable_ok = True
    else:
        q_min = minimal_realization(q)
        stable_ok = q_min.n_states == 0 or is_hurwitz(q_min.a)

    ft_ok = feedthrough_ok(cf, q)
    residual = constraint_residual(cd, q, grid)
    residual_ok = residual <= tol

    generic_ok = False
    structure_gap = np.inf
    scattering_gap = np.inf
    if ft_ok:
        try:
            k = controller_from_parameter(cf, q)
        except FeedthroughSingular:
            ft_ok = False
        else:
            k_min = minimal_realization(k)
            generic_ok = k_min.n_states == 0 or is_spectrally_generic(k_min.a)
            mu = cd.mu
            s_block = k.d[:mu, :mu]
            structure_gap = float(
                np.linalg.norm(k.d - doubled(s_block, np.zeros_like(s_block)))
            )
            scattering_gap = float(
                np.linalg.norm(s_block.conj().T @ s_block - np.eye(mu))
            )
    structure_ok = structure_gap <= tol and scattering_gap <= tol

    return MembershipVerdict(
        stable_ok=stable_ok,
        feedthrough_ok=ft_ok,
        residual=residual,
        residual_ok=residual_ok,
        generic_ok=generic_ok,
        structure_gap=structure_gap,
        scattering_gap=scattering_gap,
        structure_ok=structure_ok,
    )


# -- tangent subspace and projection ---------------------------------------


@dataclass
class TangentSubspace:
    """Sampled linearization of the quadratic form at a base parameter.

    ``w_samples`` holds (linear + quadratic*Q)(iw) on the grid; a
    direction X is tangent when X* w + w* X vanishes at every grid
    point.  Only the Hermitian part of that product constrains, which is
    exactly what :meth:`constraint_map` returns.
    """

    grid: np.ndarray
    base_point: object
    w_samples: np.ndarray

    def constraint_map(self, x_samples):
        """Hermitian-valued map values per grid point, (n_omega, d, d)."""
        x_samples = np.asarray(x_samples, dtype=np.complex128)
        if x_samples.shape != self.w_samples.shape:
            raise DimensionMismatch(
                f"direction block {x_samples.shape} does not match "
                f"subspace data {self.w_samples.shape}"
            )
        cross = x_samples.conj().swapaxes(1, 2) @ self.w_samples
        return cross + cross.conj().swapaxes(1, 2)


def tangent_subspace(cd, q, grid, samples=None):
    """Linearize the quadratic form at ``q`` over ``grid``."""
    grid = validate_grid(grid)
    if samples is None:
        _, lam_w, pi_w = cd.samples(grid)
    else:
        _, lam_w, pi_w = samples
    q_w = _parameter_samples(q, grid)
    return TangentSubspace(grid=grid, base_point=q, w_samples=lam_w + pi_w @ q_w)


def _pack(coeffs):
    return np.concatenate([coeffs.real.ravel(), coeffs.imag.ravel()])


def _unpack(vec, order, shape):
    half = vec.size // 2
    re = vec[:half].reshape(order + 1, *shape)
    im = vec[half:].reshape(order + 1, *shape)
    return re + 1j * im


def _column_tensor(basis_mat, rows, cols):
    """Samples of each real coefficient unknown, (n_vars, n_omega, rows, cols).

    Variable order matches :func:`_pack`: all real parts first in
    (k, row, col) C-order, then all imaginary parts.
    """
    nw, nb = basis_mat.shape
    n_half = nb * rows * cols
    tensor = np.zeros((2 * n_half, nw, rows, cols), dtype=np.complex128)
    v = 0
    for part in (1.0, 1j):
        for k in range(nb):
            for p in range(rows):
                for q in range(cols):
                    tensor[v, :, p, q] = part * basis_mat[:, k]
                    v += 1
    return tensor


def _real_stack(block):
    """Flatten complex samples to one real vector (Frobenius-faithful)."""
    return np.concatenate([block.real.ravel(), block.imag.ravel()])


def _hermitian_stack(blocks):
    """Independent real components of Hermitian-valued samples.

    ``blocks`` has shape (..., d, d); the result flattens the real
    diagonal plus the real and imaginary upper-triangle entries, d*d
    real numbers per matrix.
    """
    d = blocks.shape[-1]
    iu = np.triu_indices(d, 1)
    diag = blocks[..., np.arange(d), np.arange(d)].real
    upper = blocks[..., iu[0], iu[1]]
    comps = np.concatenate([diag, upper.real, upper.imag], axis=-1)
    return comps.reshape(*blocks.shape[:-2], d * d)


def _constraint_matrix(w_samples, col_tensor):
    """Real matrix of the sampled tangent constraints, (n_rows, n_vars)."""
    cross = np.einsum("vwca,wcb->vwab", col_tensor.conj(), w_samples)
    herm = cross + cross.conj().swapaxes(2, 3)
    rows = _hermitian_stack(herm)
    return rows.reshape(col_tensor.shape[0], -1).T


def _objective_matrix(col_tensor):
    n_vars = col_tensor.shape[0]
    flat = col_tensor.reshape(n_vars, -1)
    return np.concatenate([flat.real, flat.imag], axis=1).T


def _nullspace(mat):
    if mat.shape[0] == 0:
        return np.eye(mat.shape[1])
    _, s, vt = np.linalg.svd(mat, full_matrices=True)
    if s.size == 0:
        return vt.T
    tol = s[0] * max(mat.shape) * np.finfo(float).eps
    rank = int(np.count_nonzero(s > tol))
    return vt[rank:].T


def project_direction(ts, basis, direction_samples):
    """Closest tangent direction to sampled gradient values, in the basis.

    Minimizes the summed pointwise Frobenius distance to
    ``direction_samples`` over the rational basis span, subject to the
    tangent constraints of ``ts`` at every grid point — a real
    equality-constrained least-squares problem in the stacked
    coefficient unknowns, solved by restricting to the constraint
    nullspace.  A rank-deficient restricted system is reported via
    :class:`RankDeficientProjection` and resolved minimum-norm.
    """
    if basis.order < 1:
        raise ValueError("projection basis needs order >= 1")
    direction_samples = np.asarray(direction_samples, dtype=np.complex128)
    nw = ts.grid.size
    rows, cols = basis.shape
    if direction_samples.shape != (nw, rows, cols):
        raise DimensionMismatch(
            f"direction block {direction_samples.shape} does not match "
            f"grid/basis ({nw}, {rows}, {cols})"
        )

    basis_mat = basis.basis(ts.grid)
    col_tensor = _column_tensor(basis_mat, rows, cols)
    a_con = _constraint_matrix(ts.w_samples, col_tensor)
    a_obj = _objective_matrix(col_tensor)
    target = _real_stack(direction_samples)

    null = _nullspace(a_con)
    if null.shape[1] == 0:
        return YoulaParameter.zero(
            (rows, cols), basis_pole=basis.basis_pole, order=basis.order
        )
    restricted = a_obj @ null
    y, _, rank, _ = np.linalg.lstsq(restricted, target, rcond=None)
    if rank < null.shape[1]:
        warnings.warn(
            RankDeficientProjection(
                f"projection normal system rank {rank} < {null.shape[1]} "
                "unknowns; returning the minimum-norm solution"
            ),
            stacklevel=2,
        )
    x = null @ y
    return YoulaParameter(basis.basis_pole, _unpack(x, basis.order, (rows, cols)))


def restore_feasibility(cd, q, grid, tol=1e-10, max_iter=12):
    """Gauss-Newton refinement of the quadratic residual over coefficients.

    Repeatedly solves the Hermitian linearization of the quadratic form
    for a minimum-norm coefficient correction.  Because the residual is
    exactly quadratic in the parameter, each step drops it roughly to
    the square of its previous size near a feasible point.  Returns the
    best iterate seen and its residual; the caller decides whether that
    is good enough.
    """
    if not isinstance(q, YoulaParameter):
        raise TypeError("feasibility restoration operates on basis coefficients")
    grid = validate_grid(grid)
    phi_w, lam_w, pi_w = cd.samples(grid)
    basis_mat = q.basis(grid)
    col_tensor = _column_tensor(basis_mat, *q.shape)

    x = _pack(q.coeffs)
    best_x, best_res = x, np.inf
    for _ in range(max_iter + 1):
        coeffs = _unpack(x, q.order, q.shape)
        q_w = np.einsum("wk,kab->wab", basis_mat, coeffs)
        qh = q_w.conj().swapaxes(1, 2)
        cross = qh @ lam_w
        resid = phi_w + cross + cross.conj().swapaxes(1, 2) + qh @ pi_w @ q_w
        res = float(np.sqrt(np.sum(np.abs(resid) ** 2, axis=(1, 2))).max())
        if res < best_res:
            best_x, best_res = x, res
        if res <= tol:
            break
        a_con = _constraint_matrix(lam_w + pi_w @ q_w, col_tensor)
        rvec = _hermitian_stack(resid).ravel()
        step, *_ = np.linalg.lstsq(a_con, -rvec, rcond=None)
        x = x + step
    return (
        YoulaParameter(q.basis_pole, _unpack(best_x, q.order, q.shape)),
        best_res,
    )
