"""Plant regrouping, stabilizing gains, and coprime factor families.

The synthesis pipeline starts from a doubled-up plant whose inputs are
ordered (exogenous, control, exogenous-conjugate, control-conjugate) and
outputs (performance, measured, and their conjugates).  ``modify_plant``
regroups both sides so each conjugate block sits next to its partner,
which makes the controller-facing channels a trailing square block.

On the regrouped plant the classical machinery applies verbatim:
PBH tests, state-feedback / output-injection gains, and a doubly-coprime
factor family for the controller-facing block

    P22 = N M^{-1} = Mhat^{-1} Nhat

with the eight factors realized from one (A + B2 F) core and one
(A + L C2) core.  Every factorization is verified on a frequency grid
before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    BezoutResidualTooLarge,
    DimensionMismatch,
    FactorUnstable,
    FeedthroughSingular,
    NotDetectable,
    NotInYoulaRange,
    NotStabilizable,
    PlacementFailed,
)
from .norms import is_hurwitz, spectral_abscissa
from .statespace import (
    StateSpace,
    compose_lft,
    invert_system,
    log_grid,
    minimal_realization,
    validate_grid,
)

__all__ = [
    "PartitionSpec",
    "ModifiedPlant",
    "GainPair",
    "CoprimeFactorization",
    "ClosedLoopTriple",
    "default_verification_grid",
    "modify_plant",
    "undo_modify",
    "extract_p22",
    "pbh_unstabilizable_modes",
    "pbh_stabilizable",
    "pbh_detectable",
    "stabilizing_gains",
    "coprime_factorization",
    "central_controller",
    "controller_from_parameter",
    "parameter_from_controller",
    "closed_loop_triple",
]


def default_verification_grid():
    """129 log-spaced points over [1e-3, 1e3], plus omega = 0."""
    return np.concatenate([[0.0], log_grid(1e-3, 1e3, 129)])


@dataclass(frozen=True)
class PartitionSpec:
    """Channel-pair counts of a doubled-up plant.

    ``n_r``/``n_u`` count exogenous and control input pairs, ``n_z``/
    ``n_y`` performance and measured output pairs.  The loop is square
    (``n_y == n_u``), and that common count is the controller size
    ``mu`` (the controller itself is a ``2*mu``-channel doubled model).
    """

    n_r: int
    n_u: int
    n_z: int
    n_y: int

    def __post_init__(self):
        if min(self.n_r, self.n_u, self.n_z, self.n_y) < 0:
            raise ValueError("partition counts must be nonnegative")
        if self.n_y != self.n_u:
            raise ValueError(
                f"square loop required: n_y = {self.n_y} != n_u = {self.n_u}"
            )
        if self.n_r < self.n_y:
            raise ValueError(
                "unsupported partition: fewer exogenous than measured pairs "
                f"(n_r = {self.n_r} < n_y = {self.n_y})"
            )

    @property
    def mu(self):
        return self.n_u


@dataclass
class ModifiedPlant:
    """Plant with conjugate channels regrouped next to their partners.

    ``full`` maps (exogenous, control) inputs to (performance, measured)
    outputs where each group interleaves its conjugates; the widths are
    plain column/row counts, so classical (non-doubled) plants fit too.
    """

    full: StateSpace
    in_exo: int
    in_ctrl: int
    out_perf: int
    out_meas: int

    def __post_init__(self):
        p, m = self.full.shape
        if self.in_exo + self.in_ctrl != m or self.out_perf + self.out_meas != p:
            raise DimensionMismatch(
                f"partition widths {(self.out_perf, self.out_meas)} x "
                f"{(self.in_exo, self.in_ctrl)} do not tile shape {(p, m)}"
            )

    # block accessors (shared A; rectangular slices of B, C, D)

    @property
    def b1(self):
        return self.full.b[:, : self.in_exo]

    @property
    def b2(self):
        return self.full.b[:, self.in_exo :]

    @property
    def c1(self):
        return self.full.c[: self.out_perf]

    @property
    def c2(self):
        return self.full.c[self.out_perf :]

    @property
    def d11(self):
        return self.full.d[: self.out_perf, : self.in_exo]

    @property
    def d12(self):
        return self.full.d[: self.out_perf, self.in_exo :]

    @property
    def d21(self):
        return self.full.d[self.out_perf :, : self.in_exo]

    @property
    def d22(self):
        return self.full.d[self.out_perf :, self.in_exo :]

    def p11(self):
        return self.full.select(rows=slice(0, self.out_perf), cols=slice(0, self.in_exo))

    def p12(self):
        return self.full.select(rows=slice(0, self.out_perf), cols=slice(self.in_exo, None))

    def p21(self):
        return self.full.select(rows=slice(self.out_perf, None), cols=slice(0, self.in_exo))

    def p22(self):
        return self.full.select(rows=slice(self.out_perf, None), cols=slice(self.in_exo, None))


def _regroup_permutations(part):
    """Column/row orders taking (r, u, r#, u#) to (r, r#, u, u#) etc."""
    nr, nu, nz, ny = part.n_r, part.n_u, part.n_z, part.n_y
    blocks_in = [
        np.arange(0, nr),
        np.arange(nr + nu, 2 * nr + nu),
        np.arange(nr, nr + nu),
        np.arange(2 * nr + nu, 2 * (nr + nu)),
    ]
    blocks_out = [
        np.arange(0, nz),
        np.arange(nz + ny, 2 * nz + ny),
        np.arange(nz, nz + ny),
        np.arange(2 * nz + ny, 2 * (nz + ny)),
    ]
    return np.concatenate(blocks_out), np.concatenate(blocks_in)


def modify_plant(plant, part):
    """Regroup a doubled-up plant so controller channels trail.

    The input plant must have ``2*(n_r + n_u)`` inputs ordered
    (exogenous, control, exogenous-conjugate, control-conjugate) and
    ``2*(n_z + n_y)`` outputs ordered analogously.  Only channel
    permutations are applied; the state dynamics are untouched, and
    applying the inverse permutation (:func:`undo_modify`) recovers the
    plant entrywise.
    """
    p, m = plant.shape
    if m != 2 * (part.n_r + part.n_u) or p != 2 * (part.n_z + part.n_y):
        raise DimensionMismatch(
            f"plant shape {(p, m)} does not match doubled partition "
            f"{2 * (part.n_z + part.n_y), 2 * (part.n_r + part.n_u)}"
        )
    rows, cols = _regroup_permutations(part)
    reordered = StateSpace(
        plant.a, plant.b[:, cols], plant.c[rows], plant.d[rows][:, cols]
    )
    return ModifiedPlant(
        full=reordered,
        in_exo=2 * part.n_r,
        in_ctrl=2 * part.n_u,
        out_perf=2 * part.n_z,
        out_meas=2 * part.n_y,
    )


def undo_modify(mp, part):
    """Invert :func:`modify_plant`, restoring the interleaved ordering."""
    rows, cols = _regroup_permutations(part)
    inv_rows, inv_cols = np.argsort(rows), np.argsort(cols)
    f = mp.full
    return StateSpace(f.a, f.b[:, inv_cols], f.c[inv_rows], f.d[inv_rows][:, inv_cols])


def extract_p22(mp):
    """Controller-facing block of the regrouped plant."""
    return mp.p22()


# -- PBH tests ----------------------------------------------------------


def pbh_unstabilizable_modes(a, b, tol=1e-8):
    """Closed-right-half-plane eigenvalues failing rank [lambda*I - A, B]."""
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    b = np.asarray(b, dtype=np.complex128).reshape(a.shape[0], -1)
    bad = []
    for lam in np.linalg.eigvals(a) if a.size else []:
        if lam.real < 0.0:
            continue
        pencil = np.hstack([lam * np.eye(a.shape[0]) - a, b])
        sv = np.linalg.svd(pencil, compute_uv=False)
        if sv[-1] <= tol * max(sv[0], 1.0):
            bad.append(complex(lam))
    return bad


def pbh_stabilizable(a, b, tol=1e-8):
    return not pbh_unstabilizable_modes(a, b, tol)


def pbh_detectable(a, c, tol=1e-8):
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    c = np.asarray(c, dtype=np.complex128).reshape(-1, a.shape[0])
    return not pbh_unstabilizable_modes(a.conj().T, c.conj().T, tol)


# -- gain design ----------------------------------------------------------


@dataclass
class GainPair:
    """State feedback F (ctrl x states) and output injection L (states x meas)."""

    f: np.ndarray
    l: np.ndarray


def _bidiagonal_target(targets):
    lam = np.diag(np.asarray(targets, dtype=np.complex128))
    k = len(targets)
    if k > 1:
        lam[np.arange(1, k), np.arange(0, k - 1)] = 1.0
    return lam


def _assign_feedback(a, b, should_move, new_location, rng, attempts=8):
    """F with A + B F keeping the untouched modes and moving the rest.

    Ordered Schur form puts kept modes first; a Sylvester-equation
    assignment on the trailing block places the moved modes without
    disturbing the kept ones (the feedback is zero on the leading
    block's coordinates).
    """
    n = a.shape[0]
    m = b.shape[1]
    if n == 0:
        return np.zeros((m, 0), dtype=np.complex128)
    t, z, sdim = sla.schur(
        a.astype(np.complex128), output="complex", sort=lambda lam: not should_move(lam)
    )
    k = int(sdim)
    if k == n:
        return np.zeros((m, n), dtype=np.complex128)
    t22 = t[k:, k:]
    b2 = (z.conj().T @ b)[k:]
    targets = [new_location(lam) for lam in np.linalg.eigvals(t22)]
    lam = _bidiagonal_target(targets)
    for _ in range(attempts):
        g = rng.standard_normal((m, n - k)) + 1j * rng.standard_normal((m, n - k))
        try:
            x = sla.solve_sylvester(t22, -lam, -b2 @ g)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if np.linalg.cond(x) > 1e10:
            continue
        f2 = g @ np.linalg.inv(x)
        f = np.hstack([np.zeros((m, k), dtype=np.complex128), f2]) @ z.conj().T
        return f
    raise PlacementFailed(
        f"could not assign {len(targets)} modes after {attempts} attempts"
    )


def _reflect_location(lam, margin):
    if abs(lam.real) <= max(margin, 1e-12):
        return -1.0 + 1j * lam.imag
    return -lam.real + 1j * lam.imag


def stabilizing_gains(mp, policy="reflect", margin=1e-9, pbh_tol=1e-8, seed=0):
    """Design (F, L) making A + B2 F and A + L C2 Hurwitz.

    Policies
    --------
    ``"reflect"`` (default)
        Keep eigenvalues with Re < -margin, mirror strictly unstable
        ones across the imaginary axis, and push near-axis modes to
        real part -1.  A stable plant therefore gets F = 0, L = 0.
    ``"zero"``
        F = 0, L = 0 (valid only for a stable plant).
    ``"assign"``
        Move every mode to -1, -2, ..., -n.

    Raises
    ------
    NotStabilizable / NotDetectable
        On PBH failure (the offending eigenvalues are reported).
    PlacementFailed
        If the assignment cannot be completed or verification fails.
    """
    a, b2, c2 = mp.full.a, mp.b2, mp.c2
    n = a.shape[0]
    bad = pbh_unstabilizable_modes(a, b2, pbh_tol)
    if bad:
        raise NotStabilizable(f"unstabilizable modes at {bad}")
    bad = pbh_unstabilizable_modes(a.conj().T, c2.conj().T, pbh_tol)
    if bad:
        raise NotDetectable(f"undetectable modes at {np.conj(bad).tolist()}")

    rng = np.random.default_rng(seed)
    if policy == "zero":
        f = np.zeros((mp.in_ctrl, n), dtype=np.complex128)
        l = np.zeros((n, mp.out_meas), dtype=np.complex128)
    elif policy == "reflect":
        # The mirror map commutes with conjugation, so the same callbacks
        # serve the adjoint problem for L.
        should_move = lambda lam: lam.real >= -margin  # noqa: E731
        relocate = lambda lam: _reflect_location(lam, margin)  # noqa: E731
        f = _assign_feedback(a, b2, should_move, relocate, rng)
        fl = _assign_feedback(a.conj().T, c2.conj().T, should_move, relocate, rng)
        l = fl.conj().T
    elif policy == "assign":
        # Targets -1, -2, ... skipping anything too close to an existing
        # eigenvalue (a coincidence would make the placement equations
        # singular).
        eigs = np.linalg.eigvals(a) if n else np.array([])
        slots, candidate = [], 0.0
        while len(slots) < n:
            candidate -= 1.0
            if not eigs.size or np.abs(eigs - candidate).min() > 1e-6:
                slots.append(candidate)
        it_f, it_l = iter(slots), iter(slots)
        f = _assign_feedback(a, b2, lambda lam: True, lambda lam: next(it_f), rng)
        fl = _assign_feedback(
            a.conj().T, c2.conj().T, lambda lam: True, lambda lam: next(it_l), rng
        )
        l = fl.conj().T
    else:
        raise ValueError(f"unknown policy {policy!r}")

    gains = GainPair(f=f, l=l)
    for label, mat in (("A + B2*F", a + b2 @ f), ("A + L*C2", a + l @ c2)):
        abscissa = spectral_abscissa(mat)
        if not abscissa < -min(margin, 1e-12) and n:
            raise PlacementFailed(
                f"{label} not Hurwitz after placement (abscissa {abscissa:.3e})"
            )
    return gains


# -- coprime factor families ----------------------------------------------


@dataclass
class CoprimeFactorization:
    """Doubly-coprime factor family of the controller-facing block.

    ``right_family`` realizes the block transfer ``[[M, U], [N, V]]``
    and ``left_family`` realizes ``[[Vhat, -Uhat], [-Nhat, Mhat]]``;
    the named accessors slice out individual factors.  ``ctrl`` and
    ``meas`` are the loop widths (both equal ``2*mu`` for quantum
    plants).
    """

    right_family: StateSpace
    left_family: StateSpace
    gains: GainPair
    ctrl: int
    meas: int

    def m_factor(self):
        return self.right_family.select(rows=slice(0, self.ctrl), cols=slice(0, self.ctrl))

    def u_factor(self):
        return self.right_family.select(rows=slice(0, self.ctrl), cols=slice(self.ctrl, None))

    def n_factor(self):
        return self.right_family.select(rows=slice(self.ctrl, None), cols=slice(0, self.ctrl))

    def v_factor(self):
        return self.right_family.select(rows=slice(self.ctrl, None), cols=slice(self.ctrl, None))

    def vhat_factor(self):
        return self.left_family.select(rows=slice(0, self.ctrl), cols=slice(0, self.ctrl))

    def uhat_factor(self):
        return -self.left_family.select(rows=slice(0, self.ctrl), cols=slice(self.ctrl, None))

    def nhat_factor(self):
        return -self.left_family.select(rows=slice(self.ctrl, None), cols=slice(0, self.ctrl))

    def mhat_factor(self):
        return self.left_family.select(rows=slice(self.ctrl, None), cols=slice(self.ctrl, None))


def coprime_factorization(
    mp,
    gains,
    grid=None,
    bezout_tol=1e-8,
    check=True,
):
    """Assemble and verify the eight coprime factors for P22.

    Right family ``[[M, U], [N, V]]`` from the state-feedback core and
    left family ``[[Vhat, -Uhat], [-Nhat, Mhat]]`` from the injection
    core.  With ``check=True`` (default) the product of the two families
    is compared to the identity on the grid, both factor cores must be
    Hurwitz, and ``N M^{-1}``/``Mhat^{-1} Nhat`` must reproduce P22.
    """
    a, b2, c2, d22 = mp.full.a, mp.b2, mp.c2, mp.d22
    f, l = gains.f, gains.l
    nc, nm = mp.in_ctrl, mp.out_meas
    eye_c, eye_m = np.eye(nc), np.eye(nm)

    right = StateSpace(
        a + b2 @ f,
        np.hstack([b2, -l]),
        np.vstack([f, c2 + d22 @ f]),
        np.block([[eye_c, np.zeros((nc, nm))], [d22, eye_m]]),
    )
    left = StateSpace(
        a + l @ c2,
        np.hstack([-(b2 + l @ d22), l]),
        np.vstack([f, c2]),
        np.block([[eye_c, np.zeros((nc, nm))], [-d22, eye_m]]),
    )
    cf = CoprimeFactorization(
        right_family=right, left_family=left, gains=gains, ctrl=nc, meas=nm
    )
    if not check:
        return cf

    for label, mat in (("right", right.a), ("left", left.a)):
        if mat.shape[0] and not is_hurwitz(mat, 1e-12):
            raise FactorUnstable(
                f"{label} factor family core not Hurwitz "
                f"(abscissa {spectral_abscissa(mat):.3e})"
            )

    if grid is None:
        grid = default_verification_grid()
    grid = validate_grid(grid)
    rw = right.response(grid)
    lw = left.response(grid)
    eye = np.eye(nc + nm)
    residual = float(
        np.sqrt(np.sum(np.abs(lw @ rw - eye) ** 2, axis=(1, 2))).max()
    )
    if residual > bezout_tol:
        raise BezoutResidualTooLarge(
            f"factor-family identity residual {residual:.3e} > {bezout_tol:.1e}"
        )

    p22w = mp.p22().response(grid)
    m_w = rw[:, :nc, :nc]
    n_w = rw[:, nc:, :nc]
    nhat_w = -lw[:, nc:, :nc]
    mhat_w = lw[:, nc:, nc:]
    res_right = np.abs(
        np.linalg.solve(m_w.swapaxes(1, 2), n_w.swapaxes(1, 2)).swapaxes(1, 2) - p22w
    ).max()
    res_left = np.abs(np.linalg.solve(mhat_w, nhat_w) - p22w).max()
    if max(res_right, res_left) > bezout_tol * max(1.0, np.abs(p22w).max()):
        raise BezoutResidualTooLarge(
            f"factor quotients deviate from P22 by {max(res_right, res_left):.3e}"
        )
    return cf


def central_controller(mp, cf):
    """Observer-form stabilizing controller; equals U V^{-1}."""
    a, b2, c2, d22 = mp.full.a, mp.b2, mp.c2, mp.d22
    f, l = cf.gains.f, cf.gains.l
    return StateSpace(a + b2 @ f + l @ (c2 + d22 @ f), -l, f, np.zeros((cf.ctrl, cf.meas)))


def _as_statespace_parameter(q):
    if isinstance(q, StateSpace):
        return q
    return q.to_statespace()


def controller_from_parameter(cf, q, feed_tol=1e-9):
    """Controller ``K = (U + M Q)(V + N Q)^{-1}`` for a stable parameter.

    Raises
    ------
    FeedthroughSingular
        When ``(V + N Q)`` has a singular feedthrough, i.e. the
        candidate controller would be improper.
    """
    qss = _as_statespace_parameter(q)
    if qss.shape != (cf.ctrl, cf.meas):
        raise DimensionMismatch(
            f"parameter shape {qss.shape} != loop shape {(cf.ctrl, cf.meas)}"
        )
    num = cf.u_factor() + cf.m_factor() @ qss
    den = cf.v_factor() + cf.n_factor() @ qss
    sv = np.linalg.svd(den.d, compute_uv=False)
    if sv[-1] <= feed_tol * max(sv[0], 1.0):
        raise FeedthroughSingular(
            f"(V + N Q) feedthrough singular (sigma_min = {sv[-1]:.3e})"
        )
    return num @ invert_system(den)


def parameter_from_controller(cf, k, stability_margin=1e-9, feed_tol=1e-9):
    """Invert the controller map: ``Q = (M - K N)^{-1} (K V - U)``.

    Returns a minimal realization of Q.  Raises ``NotInYoulaRange`` when
    the resulting parameter is unstable (the controller is not a
    stabilizing one for this factorization) and ``FeedthroughSingular``
    when ``M - K N`` is improper-invertible.
    """
    if k.shape != (cf.ctrl, cf.meas):
        raise DimensionMismatch(
            f"controller shape {k.shape} != loop shape {(cf.ctrl, cf.meas)}"
        )
    den = cf.m_factor() - k @ cf.n_factor()
    sv = np.linalg.svd(den.d, compute_uv=False)
    if sv[-1] <= feed_tol * max(sv[0], 1.0):
        raise FeedthroughSingular(
            f"(M - K N) feedthrough singular (sigma_min = {sv[-1]:.3e})"
        )
    num = k @ cf.v_factor() - cf.u_factor()
    q = minimal_realization(invert_system(den) @ num, tol=1e-8)
    if q.n_states and not is_hurwitz(q.a, stability_margin):
        raise NotInYoulaRange(
            f"recovered parameter unstable (abscissa {spectral_abscissa(q.a):.3e})"
        )
    return q


@dataclass
class ClosedLoopTriple:
    """Affine closed-loop data: ``G(Q) = t0 + t1 Q t2`` with stable parts."""

    t0: StateSpace
    t1: StateSpace
    t2: StateSpace


def closed_loop_triple(mp, cf):
    """Stable realizations of the affine closed-loop decomposition.

    ``t1`` and ``t2`` use the exact reduced forms of the compositions
    (the plant modes cancel structurally), and ``t0`` closes the loop
    with the observer-form central controller, giving a realization
    whose spectrum is that of the two gain cores.
    """
    a, b2, c2 = mp.full.a, mp.b2, mp.c2
    b1, c1 = mp.b1, mp.c1
    d12, d21 = mp.d12, mp.d21
    f, l = cf.gains.f, cf.gains.l

    t1 = StateSpace(a + b2 @ f, b2, c1 + d12 @ f, d12)
    t2 = StateSpace(a + l @ c2, b1 + l @ d21, c2, d21)
    t0 = compose_lft(
        mp.full, central_controller(mp, cf), n_meas=mp.out_meas, n_ctrl=mp.in_ctrl
    )
    return ClosedLoopTriple(t0=t0, t1=t1, t2=t2)
