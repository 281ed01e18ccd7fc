"""Weighted H2 model matching over the constrained parameter family.

The closed loop is affine in the stable parameter, so wrapping it in
stable frequency weights gives an exactly quadratic squared-H2 cost.
This module assembles the six weighted operators that cost needs, the
frequency-sampled gradient, and a projected-gradient descent that walks
the rational coefficient basis while a Gauss-Newton pull-back keeps the
iterates on the quadratic constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InfeasibleStart,
    NotStable,
    NotStrictlyProper,
    StalledLineSearch,
)
from .norms import (
    h2_inner_quadrature,
    h2_norm_sq,
    h2_norm_sq_quadrature,
    is_hurwitz,
    quad_grid,
    sigma_max_profile,
    spectral_abscissa,
)
from .stabilization import closed_loop_triple, controller_from_parameter
from .statespace import (
    StateSpace,
    blockdiag_systems,
    compose_lft,
    conjugate_system,
    identity_system,
    log_grid,
    validate_grid,
)
from .youla_constraint import (
    YoulaParameter,
    membership_qhat,
    project_direction,
    restore_feasibility,
    tangent_subspace,
)

#: Number of step halvings the line search tries before giving up.
MAX_LINE_SEARCH_HALVINGS = 30

#: Default number of points in the automatically chosen descent grid.
DEFAULT_GRID_POINTS = 33

#: Amplitude ratio (-40 dB) defining the weight bandwidth for that grid.
BANDWIDTH_DROP = 1e-2


# -- problem assembly --------------------------------------------------------


@dataclass
class SynthesisProblem:
    """Weighted model-matching data, ready for cost/gradient evaluation.

    ``bold_t0/t1/t2`` are the weighted closed-loop operators; the cost is
    the squared H2 norm of ``bold_t0 + bold_t1 Q bold_t2``.  The hatted
    operators fold the outer factors into the quadratic expansion of that
    cost: ``hat_t0`` drives the linear term, ``hat_t1``/``hat_t2`` the
    quadratic one, and the gradient is ``2(hat_t0 + hat_t1 Q hat_t2)``
    evaluated on ``grid``.
    """

    mp: object
    cf: object
    cd: object
    w_in: StateSpace
    w_out: StateSpace
    bold_t0: StateSpace
    bold_t1: StateSpace
    bold_t2: StateSpace
    hat_t0: StateSpace
    hat_t1: StateSpace
    hat_t2: StateSpace
    grid: np.ndarray
    _hat_samples: tuple = field(repr=False, default=None)
    _cd_samples: tuple = field(repr=False, default=None)

    @property
    def parameter_shape(self):
        """(rows, cols) every admissible parameter must have."""
        return (self.bold_t1.n_inputs, self.bold_t2.n_outputs)

    def hat_samples(self):
        """Grid responses of the three hatted operators (cached)."""
        if self._hat_samples is None:
            self._hat_samples = (
                self.hat_t0.response(self.grid),
                self.hat_t1.response(self.grid),
                self.hat_t2.response(self.grid),
            )
        return self._hat_samples

    def cd_samples(self):
        """Grid responses of the constraint coefficients (cached)."""
        if self._cd_samples is None:
            self._cd_samples = self.cd.samples(self.grid)
        return self._cd_samples


def _prepare_weight(w, width, name):
    """Normalize one weight: default/scalar tiling and stability check."""
    if w is None:
        return identity_system(width)
    if not isinstance(w, StateSpace):
        raise TypeError(f"{name} must be a StateSpace (or None for identity)")
    if w.shape == (1, 1) and width != 1:
        w = blockdiag_systems([w] * width)
    if not is_hurwitz(w.a):
        raise NotStable(f"{name} must be a stable weight")
    return w


def _zero_feedthrough(sys):
    return StateSpace(sys.a, sys.b, sys.c, np.zeros_like(sys.d))


def default_descent_grid(w_out, w_in, points=DEFAULT_GRID_POINTS):
    """Log grid spanning the -40 dB bandwidth of the combined weights.

    The bandwidth is measured on the scalar profile
    ``sigma_max(w_out) * sigma_max(w_in)`` over a wide probe range; flat
    (e.g. static) weights therefore fall back to the full probe span.
    """
    probe = log_grid(1e-4, 1e4, 241)
    prof = sigma_max_profile(w_out, probe) * sigma_max_profile(w_in, probe)
    peak = prof.max()
    if peak <= 0.0:
        raise ValueError("weights have identically zero response")
    keep = np.flatnonzero(prof >= peak * BANDWIDTH_DROP)
    lo, hi = probe[keep[0]], probe[keep[-1]]
    if hi <= lo:
        hi = lo * 10.0
    return log_grid(lo, hi, points)


def assemble_problem(mp, cf, cd, w_in=None, w_out=None, grid=None, properness_tol=1e-9):
    """Build the weighted operators and their quadratic-expansion data.

    The cost is finite only when the weighted loop is strictly proper for
    every parameter in the basis family, which requires the constant term
    of the weighted map itself to vanish and at least one of the two
    affine factors to lose its feedthrough.  Violations raise
    :class:`NotStrictlyProper` here, at assembly, rather than deep inside
    a norm computation.
    """
    triple = closed_loop_triple(mp, cf)
    w_out = _prepare_weight(w_out, triple.t0.n_outputs, "w_out")
    w_in = _prepare_weight(w_in, triple.t0.n_inputs, "w_in")
    if w_out.n_inputs != triple.t0.n_outputs:
        raise DimensionMismatch(
            f"w_out acts on {w_out.n_inputs} channels, loop emits {triple.t0.n_outputs}"
        )
    if w_in.n_outputs != triple.t0.n_inputs:
        raise DimensionMismatch(
            f"w_in feeds {w_in.n_outputs} channels, loop accepts {triple.t0.n_inputs}"
        )

    bold_t0 = w_out @ triple.t0 @ w_in
    bold_t1 = w_out @ triple.t1
    bold_t2 = triple.t2 @ w_in

    d0 = float(np.abs(bold_t0.d).max(initial=0.0))
    d1 = float(np.abs(bold_t1.d).max(initial=0.0))
    d2 = float(np.abs(bold_t2.d).max(initial=0.0))
    if d0 > properness_tol:
        raise NotStrictlyProper(
            f"weighted map keeps feedthrough |D| = {d0:.3e}; "
            "use strictly proper weights"
        )
    if min(d1, d2) > properness_tol:
        raise NotStrictlyProper(
            "both affine factors keep feedthrough "
            f"({d1:.3e}, {d2:.3e}); parameter directions would not stay H2"
        )
    bold_t0 = _zero_feedthrough(bold_t0)
    if d1 <= properness_tol:
        bold_t1 = _zero_feedthrough(bold_t1)
    if d2 <= properness_tol:
        bold_t2 = _zero_feedthrough(bold_t2)

    shape = (bold_t1.n_inputs, bold_t2.n_outputs)
    if cd.phi.shape != shape:
        raise DimensionMismatch(
            f"constraint blocks are {cd.phi.shape}, parameter slots are {shape}"
        )

    hat_t0 = conjugate_system(bold_t1) @ bold_t0 @ conjugate_system(bold_t2)
    hat_t1 = conjugate_system(bold_t1) @ bold_t1
    hat_t2 = bold_t2 @ conjugate_system(bold_t2)

    if grid is None:
        grid = default_descent_grid(w_out, w_in)
    grid = validate_grid(np.asarray(grid, dtype=np.float64))

    return SynthesisProblem(
        mp=mp,
        cf=cf,
        cd=cd,
        w_in=w_in,
        w_out=w_out,
        bold_t0=bold_t0,
        bold_t1=bold_t1,
        bold_t2=bold_t2,
        hat_t0=hat_t0,
        hat_t1=hat_t1,
        hat_t2=hat_t2,
        grid=grid,
    )


# -- cost and gradient -------------------------------------------------------


def _as_statespace(q):
    return q.to_statespace() if isinstance(q, YoulaParameter) else q


def _samples(q, omegas):
    if isinstance(q, YoulaParameter):
        return q.evaluate(omegas)
    return q.response(omegas)


def cost(sp, q):
    """Squared H2 norm of the weighted loop at parameter ``q`` (Gramian).

    Assembles a realization of ``bold_t0 + bold_t1 q bold_t2`` and solves
    one Lyapunov equation; exact up to linear-algebra roundoff.
    """
    qss = _as_statespace(q)
    return h2_norm_sq(sp.bold_t0 + sp.bold_t1 @ qss @ sp.bold_t2)


def cost_quadrature(sp, q, grid=None):
    """The same cost through its quadratic expansion and quadrature.

    ``E = ||bold_t0||^2 + 2 Re<hat_t0, Q> + <Q, hat_t1 Q hat_t2>`` with
    every term integrated over a wide two-sided frequency grid.  This is
    an independent cross-check of :func:`cost`; accuracy is set by the
    quadrature grid, not by the Lyapunov solver.
    """
    qss = _as_statespace(q)
    if grid is None:
        grid = quad_grid(sp.bold_t0, sp.hat_t0, sp.hat_t1, sp.hat_t2, qss)
    base = h2_norm_sq_quadrature(sp.bold_t0, grid)
    cross = h2_inner_quadrature(sp.hat_t0, qss, grid)
    square = h2_inner_quadrature(qss, sp.hat_t1 @ qss @ sp.hat_t2, grid)
    return float(base + 2.0 * cross.real + square.real)


def gradient(sp, q):
    """Cost-gradient samples ``2(hat_t0 + hat_t1 Q hat_t2)`` on ``sp.grid``.

    Returned as an ``(n_omega, rows, cols)`` array; pairing a coefficient
    direction against these samples (real trace inner product per point,
    summed over the grid) gives the directional derivative of the
    grid-sampled quadratic cost.
    """
    hat0_w, hat1_w, hat2_w = sp.hat_samples()
    q_w = _samples(q, sp.grid)
    return 2.0 * (hat0_w + hat1_w @ q_w @ hat2_w)


# -- descent -----------------------------------------------------------------


@dataclass(frozen=True)
class DescentConfig:
    """Knobs for the projected-gradient loop.

    ``correction_period`` sets how often (in iterations) the candidate is
    pulled back onto the constraint set before being scored; ``0``
    disables scheduled pull-backs, leaving only the safety pull-back that
    fires when a trial drifts past ten times ``constraint_tol``.
    """

    alpha0: float = 1.0
    backtrack_ratio: float = 0.5
    max_iters: int = 200
    grad_tol: float = 1e-8
    constraint_tol: float = 1e-6
    correction_period: int = 5

    def __post_init__(self):
        if not self.alpha0 > 0.0:
            raise ValueError("alpha0 must be positive")
        if not 0.0 < self.backtrack_ratio < 1.0:
            raise ValueError("backtrack_ratio must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol < 0.0 or self.constraint_tol < 0.0:
            raise ValueError("tolerances must be nonnegative")
        if self.correction_period < 0:
            raise ValueError("correction_period must be nonnegative")


@dataclass(frozen=True)
class DescentTrace:
    """Per-iteration history of the descent, as parallel arrays.

    Each row describes one completed iteration: the accepted cost, the
    RMS gradient and projected-step magnitudes over the grid, the
    constraint residual of the accepted iterate, and the accepted step
    size.  A terminating row (gradient below tolerance, nothing stepped)
    carries ``alpha = 0``.
    """

    iteration: np.ndarray
    cost: np.ndarray
    grad_norm: np.ndarray
    step_norm: np.ndarray
    constraint_residual: np.ndarray
    alpha: np.ndarray

    def __len__(self):
        return int(self.iteration.size)

    @classmethod
    def from_records(cls, records):
        cols = list(zip(*records)) if records else [[]] * 6
        return cls(
            iteration=np.asarray(cols[0], dtype=np.int64),
            cost=np.asarray(cols[1], dtype=np.float64),
            grad_norm=np.asarray(cols[2], dtype=np.float64),
            step_norm=np.asarray(cols[3], dtype=np.float64),
            constraint_residual=np.asarray(cols[4], dtype=np.float64),
            alpha=np.asarray(cols[5], dtype=np.float64),
        )

    def rows(self):
        """Yield plain-tuple rows (iter, E, grad, step, residual, alpha)."""
        for k in range(len(self)):
            yield (
                int(self.iteration[k]),
                float(self.cost[k]),
                float(self.grad_norm[k]),
                float(self.step_norm[k]),
                float(self.constraint_residual[k]),
                float(self.alpha[k]),
            )


def _rms(samples):
    """Root-mean-square Frobenius magnitude over the grid axis."""
    return float(np.sqrt(np.mean(np.sum(np.abs(samples) ** 2, axis=(1, 2)))))


def _grid_residual(cd_samples, q_w):
    """Max Frobenius norm of the quadratic form at precomputed samples."""
    phi_w, lam_w, pi_w = cd_samples
    qh = q_w.conj().swapaxes(1, 2)
    cross = qh @ lam_w
    resid = phi_w + cross + cross.conj().swapaxes(1, 2) + qh @ pi_w @ q_w
    return float(np.sqrt(np.sum(np.abs(resid) ** 2, axis=(1, 2))).max())


def descend(sp, q_init, cfg=None):
    """Projected-gradient descent of the weighted H2 cost.

    Each iteration projects the gradient samples onto the tangent
    subspace of the quadratic constraint at the current iterate, then
    backtracks (Armijo with plain decrease) along the negative projected
    direction.  Feasibility is maintained two ways: any trial whose
    residual drifts past ten times the constraint tolerance is pulled
    back before being scored, and every ``correction_period`` iterations
    the accepted point is tightened by a Gauss-Newton pull-back — adopted
    only when it does not raise the cost, so the recorded sequence stays
    non-increasing while the residual stays inside the hard bound.

    Returns the final parameter and a :class:`DescentTrace`.

    Raises
    ------
    InfeasibleStart
        When ``q_init`` violates the constraint beyond tolerance.
    StalledLineSearch
        When thirty halvings produce no decrease.
    """
    if cfg is None:
        cfg = DescentConfig()
    if not isinstance(q_init, YoulaParameter):
        raise TypeError("descent iterates over basis coefficients")
    if q_init.shape != sp.parameter_shape:
        raise DimensionMismatch(
            f"parameter block {q_init.shape} does not fit slots {sp.parameter_shape}"
        )

    grid = sp.grid
    cd_samples = sp.cd_samples()
    hat0_w, hat1_w, hat2_w = sp.hat_samples()
    restore_tol = max(1e-12, 1e-2 * cfg.constraint_tol)
    safety = 10.0 * cfg.constraint_tol

    q_cur = q_init
    res_cur = _grid_residual(cd_samples, q_cur.evaluate(grid))
    if res_cur > cfg.constraint_tol:
        raise InfeasibleStart(
            f"initial constraint residual {res_cur:.3e} exceeds "
            f"tolerance {cfg.constraint_tol:.3e}"
        )
    e_cur = cost(sp, q_cur)

    records = []
    alpha_seed = cfg.alpha0
    for k in range(cfg.max_iters):
        q_w = q_cur.evaluate(grid)
        grad_w = 2.0 * (hat0_w + hat1_w @ q_w @ hat2_w)
        grad_norm = _rms(grad_w)
        ts = tangent_subspace(sp.cd, q_cur, grid, samples=cd_samples)
        direction = project_direction(ts, q_cur, grad_w)
        proj_norm = _rms(direction.evaluate(grid))
        if proj_norm <= cfg.grad_tol:
            records.append((k, e_cur, grad_norm, 0.0, res_cur, 0.0))
            break

        alpha = alpha_seed
        accepted = None
        for _ in range(MAX_LINE_SEARCH_HALVINGS + 1):
            cand = YoulaParameter(
                q_cur.basis_pole, q_cur.coeffs - alpha * direction.coeffs
            )
            cand_res = _grid_residual(cd_samples, cand.evaluate(grid))
            if cand_res > safety:
                cand, cand_res = restore_feasibility(
                    sp.cd, cand, grid, tol=restore_tol
                )
            e_cand = cost(sp, cand)
            if e_cand < e_cur:
                accepted = (cand, cand_res, e_cand, alpha)
                break
            alpha *= cfg.backtrack_ratio
        if accepted is None:
            raise StalledLineSearch(
                f"no cost decrease after {MAX_LINE_SEARCH_HALVINGS} halvings "
                f"at iteration {k} (E = {e_cur:.6e})"
            )
        q_cur, res_cur, e_cur, alpha = accepted
        due = cfg.correction_period > 0 and (k + 1) % cfg.correction_period == 0
        if due and res_cur > restore_tol:
            q_tight, res_tight = restore_feasibility(
                sp.cd, q_cur, grid, tol=restore_tol
            )
            e_tight = cost(sp, q_tight)
            if e_tight <= e_cur:
                q_cur, res_cur, e_cur = q_tight, res_tight, e_tight
        records.append((k, e_cur, grad_norm, alpha * proj_norm, res_cur, alpha))
        alpha_seed = min(cfg.alpha0, alpha / cfg.backtrack_ratio)

    return q_cur, DescentTrace.from_records(records)


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisVerdict:
    """Outcome of post-descent validation.

    Bundles the full membership verdict for the final parameter with an
    independent internal-stability re-check of the assembled control
    loop (spectral abscissa of the interconnection).
    """

    membership: object
    closed_loop_stable: bool
    closed_loop_abscissa: float

    @property
    def ok(self):
        return bool(self.membership.in_qhat and self.closed_loop_stable)


def validate_result(sp, q_final, grid=None, tol=1e-6, margin=1e-9):
    """Re-verify a descent result from scratch.

    Runs the full membership battery on ``q_final`` and, independently,
    assembles the controller and closes the physical loop to confirm the
    interconnection matrix is Hurwitz.
    """
    verdict = membership_qhat(sp.cf, q_final, grid=grid, tol=tol)
    try:
        k = controller_from_parameter(sp.cf, q_final)
        loop = compose_lft(
            sp.mp.full, k, n_meas=sp.mp.out_meas, n_ctrl=sp.mp.in_ctrl
        )
        abscissa = spectral_abscissa(loop.a)
        stable = bool(abscissa < -margin)
    except Exception:
        abscissa = np.inf
        stable = False
    return SynthesisVerdict(
        membership=verdict,
        closed_loop_stable=stable,
        closed_loop_abscissa=float(abscissa),
    )
