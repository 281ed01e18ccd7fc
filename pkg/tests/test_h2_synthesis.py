"""Weighted quadratic cost, its sampled gradient, and projected descent."""

import numpy as np
import pytest

from coherentctl.errors import (
    DimensionMismatch,
    InfeasibleStart,
    NotStable,
    NotStrictlyProper,
    StalledLineSearch,
)
from coherentctl.h2_synthesis import (
    DescentConfig,
    DescentTrace,
    SynthesisProblem,
    assemble_problem,
    cost,
    cost_quadrature,
    default_descent_grid,
    descend,
    gradient,
    validate_result,
)
from coherentctl.norms import h2_inner_quadrature, h2_norm_sq, quad_grid
from coherentctl.stabilization import (
    GainPair,
    ModifiedPlant,
    closed_loop_triple,
    compose_lft,
    coprime_factorization,
    controller_from_parameter,
    stabilizing_gains,
)
from coherentctl.statespace import (
    StateSpace,
    identity_system,
    log_grid,
    static_gain,
)
from coherentctl.youla_constraint import (
    YoulaParameter,
    build_constraint_data,
    constraint_residual,
)

from conftest import (
    coupled_cavity_loop,
    exact_cavity_parameter,
    lowpass_weight,
    make_rng,
    matched_target_problem,
    mixing_weight_cavity_problem,
    scalar_demo_loop,
    zero_constraints,
)


def scalar_problem(grid=None):
    """Scalar demo loop with lowpass weights and vacuous constraints."""
    mp, cf = scalar_demo_loop()
    return assemble_problem(
        mp,
        cf,
        zero_constraints(1),
        w_in=lowpass_weight(1.0, 10.0),
        w_out=lowpass_weight(1.0, 10.0),
        grid=log_grid(1e-2, 1e1, 25) if grid is None else grid,
    )


def cavity_problem(grid=None):
    """Two-channel cavity with real constraint data and tiled weights."""
    mp, cf = coupled_cavity_loop()
    cd = build_constraint_data(cf)
    w = lowpass_weight(0.7, 10.0)
    return assemble_problem(
        mp,
        cf,
        cd,
        w_in=w,
        w_out=w,
        grid=log_grid(1e-2, 1e1, 17) if grid is None else grid,
    )


def random_parameter(seed, order=2, shape=(1, 1), scale=1.0):
    rng = make_rng(seed)
    coeffs = scale * (
        rng.normal(size=(order + 1, *shape))
        + 1j * rng.normal(size=(order + 1, *shape))
    )
    return YoulaParameter(1.0, coeffs)


def dead_exogenous_problem():
    """Loop whose exogenous channel is disconnected: T0 = 0 and T2 = 0.

    The gradient then vanishes identically, so descent must terminate at
    iteration zero regardless of the starting parameter.
    """
    full = StateSpace(
        [[1.0]],
        np.array([[0.0, 1.0]]),
        np.ones((2, 1)),
        np.zeros((2, 2)),
    )
    mp = ModifiedPlant(full, in_exo=1, in_ctrl=1, out_perf=1, out_meas=1)
    cf = coprime_factorization(mp, stabilizing_gains(mp))
    w = lowpass_weight(1.0, 10.0)
    return assemble_problem(
        mp, cf, zero_constraints(1), w_in=w, w_out=w, grid=log_grid(1e-1, 1e1, 9)
    )


class TestAssembleProblem:
    def test_weighted_operators_match_pointwise(self):
        sp = scalar_problem()
        mp, cf = scalar_demo_loop()
        triple = closed_loop_triple(mp, cf)
        w = lowpass_weight(1.0, 10.0)
        om = sp.grid
        ww = w.response(om)
        t0, t1, t2 = (s.response(om) for s in (triple.t0, triple.t1, triple.t2))
        assert np.allclose(sp.bold_t0.response(om), ww @ t0 @ ww, atol=1e-12)
        assert np.allclose(sp.bold_t1.response(om), ww @ t1, atol=1e-12)
        assert np.allclose(sp.bold_t2.response(om), t2 @ ww, atol=1e-12)

    def test_hatted_operators_are_conjugate_compositions(self):
        sp = scalar_problem()
        om = sp.grid
        b0, b1, b2 = (
            s.response(om) for s in (sp.bold_t0, sp.bold_t1, sp.bold_t2)
        )
        b1h = b1.conj().swapaxes(1, 2)
        b2h = b2.conj().swapaxes(1, 2)
        assert np.allclose(sp.hat_t0.response(om), b1h @ b0 @ b2h, atol=1e-12)
        assert np.allclose(sp.hat_t1.response(om), b1h @ b1, atol=1e-12)
        assert np.allclose(sp.hat_t2.response(om), b2 @ b2h, atol=1e-12)

    def test_identity_weights_by_default(self):
        mp, cf = scalar_demo_loop()
        sp = assemble_problem(
            mp, cf, zero_constraints(1), grid=log_grid(1e-1, 1e1, 7)
        )
        triple = closed_loop_triple(mp, cf)
        om = sp.grid
        assert np.allclose(
            sp.bold_t0.response(om), triple.t0.response(om), atol=1e-12
        )
        assert sp.w_in.n_states == 0 and sp.w_out.n_states == 0

    def test_scalar_weight_tiles_to_loop_width(self):
        sp, _ = mixing_weight_cavity_problem()
        assert sp.w_in.shape == (2, 2)
        assert sp.bold_t0.shape == (2, 2)
        assert sp.parameter_shape == (2, 2)

    def test_static_weights_on_feedthrough_loop_rejected(self):
        mp, cf = coupled_cavity_loop()
        cd = build_constraint_data(cf)
        with pytest.raises(NotStrictlyProper):
            assemble_problem(mp, cf, cd, grid=log_grid(1e-1, 1e1, 5))

    def test_both_affine_factors_improper_rejected(self):
        full = StateSpace(
            [[-1.0]],
            np.ones((1, 2)),
            np.ones((2, 1)),
            np.array([[0.0, 1.0], [1.0, 0.0]]),
        )
        mp = ModifiedPlant(full, in_exo=1, in_ctrl=1, out_perf=1, out_meas=1)
        cf = coprime_factorization(mp, stabilizing_gains(mp))
        with pytest.raises(NotStrictlyProper):
            assemble_problem(
                mp, cf, zero_constraints(1), grid=log_grid(1e-1, 1e1, 5)
            )

    def test_single_improper_factor_is_fine(self):
        full = StateSpace(
            [[-1.0]],
            np.ones((1, 2)),
            np.ones((2, 1)),
            np.array([[0.0, 1.0], [1.0, 0.0]]),
        )
        mp = ModifiedPlant(full, in_exo=1, in_ctrl=1, out_perf=1, out_meas=1)
        cf = coprime_factorization(mp, stabilizing_gains(mp))
        sp = assemble_problem(
            mp,
            cf,
            zero_constraints(1),
            w_in=lowpass_weight(1.0, 5.0),
            grid=log_grid(1e-1, 1e1, 5),
        )
        assert np.abs(sp.bold_t1.d).max() > 0.5
        assert np.abs(sp.bold_t2.d).max() == 0.0
        value = cost(sp, random_parameter(0, order=1))
        assert np.isfinite(value) and value >= 0.0

    def test_constraint_width_mismatch_rejected(self):
        mp, cf = scalar_demo_loop()
        with pytest.raises(DimensionMismatch):
            assemble_problem(
                mp, cf, zero_constraints(2), grid=log_grid(1e-1, 1e1, 5)
            )

    def test_weight_width_mismatch_rejected(self):
        mp, cf = coupled_cavity_loop()
        cd = build_constraint_data(cf)
        with pytest.raises(DimensionMismatch):
            assemble_problem(
                mp,
                cf,
                cd,
                w_out=static_gain(np.eye(3)),
                grid=log_grid(1e-1, 1e1, 5),
            )

    def test_unstable_weight_rejected(self):
        mp, cf = scalar_demo_loop()
        bad = StateSpace([[0.5]], [[1.0]], [[1.0]], [[0.0]])
        with pytest.raises(NotStable):
            assemble_problem(
                mp, cf, zero_constraints(1), w_in=bad, grid=log_grid(0.1, 1, 3)
            )

    def test_default_grid_spans_weight_bandwidth(self):
        w = lowpass_weight(1.0, 10.0)
        grid = default_descent_grid(w, w)
        assert grid.size == 33
        assert grid[0] == pytest.approx(1e-4)
        # |w|^2 falls to 1e-2 of its peak near omega ~ 99.5
        assert 80.0 < grid[-1] < 110.0
        assert np.all(np.diff(grid) > 0)

    def test_unsorted_grid_rejected(self):
        mp, cf = scalar_demo_loop()
        with pytest.raises(ValueError):
            assemble_problem(
                mp, cf, zero_constraints(1), grid=np.array([1.0, 0.5, 2.0])
            )


class TestCost:
    def test_matches_directly_assembled_weighted_loop(self):
        sp = cavity_problem()
        q = exact_cavity_parameter(2)
        direct = h2_norm_sq(
            sp.w_out
            @ compose_lft(
                sp.mp.full,
                controller_from_parameter(sp.cf, q),
                n_meas=sp.mp.out_meas,
                n_ctrl=sp.mp.in_ctrl,
            )
            @ sp.w_in
        )
        assert cost(sp, q) == pytest.approx(direct, rel=1e-6)

    def test_zero_parameter_cost_is_constant_term_norm(self):
        sp = scalar_problem()
        q = YoulaParameter.zero((1, 1), order=2)
        assert cost(sp, q) == pytest.approx(h2_norm_sq(sp.bold_t0), rel=1e-12)

    def test_quadrature_expansion_agrees(self):
        sp = scalar_problem()
        q = random_parameter(3)
        lyap = cost(sp, q)
        quad = cost_quadrature(sp, q)
        assert quad == pytest.approx(lyap, rel=1e-3)

    def test_quadrature_expansion_agrees_on_cavity(self):
        sp = cavity_problem()
        q = exact_cavity_parameter(1)
        assert cost_quadrature(sp, q) == pytest.approx(cost(sp, q), rel=1e-3)

    def test_statespace_parameter_accepted(self):
        sp = scalar_problem()
        q = random_parameter(5)
        assert cost(sp, q.to_statespace()) == pytest.approx(
            cost(sp, q), rel=1e-12
        )

    def test_unstable_parameter_rejected(self):
        sp = scalar_problem()
        bad = StateSpace([[0.3]], [[1.0]], [[1.0]], [[0.0]])
        with pytest.raises(NotStable):
            cost(sp, bad)

    def test_midpoint_convexity(self):
        sp = scalar_problem()
        qa = random_parameter(11)
        qb = random_parameter(12)
        mid = YoulaParameter(1.0, 0.5 * (qa.coeffs + qb.coeffs))
        assert cost(sp, mid) <= 0.5 * (cost(sp, qa) + cost(sp, qb)) + 1e-10


class TestGradient:
    def test_samples_are_hatted_composition(self):
        sp = scalar_problem()
        q = random_parameter(7)
        om = sp.grid
        manual = 2.0 * (
            sp.hat_t0.response(om)
            + sp.hat_t1.response(om) @ q.evaluate(om) @ sp.hat_t2.response(om)
        )
        assert np.allclose(gradient(sp, q), manual, atol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_finite_difference_directional_derivative(self, seed):
        sp = scalar_problem()
        q = random_parameter(seed, order=2, scale=0.5)
        delta = random_parameter(100 + seed, order=2)
        h = 1e-3
        up = YoulaParameter(1.0, q.coeffs + h * delta.coeffs)
        dn = YoulaParameter(1.0, q.coeffs - h * delta.coeffs)
        fd = (cost(sp, up) - cost(sp, dn)) / (2.0 * h)

        grad_sys = sp.hat_t0 + sp.hat_t1 @ q.to_statespace() @ sp.hat_t2
        dss = delta.to_statespace()
        wide = quad_grid(grad_sys, dss, points_per_decade=512)
        pairing = 2.0 * h2_inner_quadrature(grad_sys, dss, wide).real
        assert fd == pytest.approx(pairing, rel=1e-4)

    def test_grid_functional_derivative_matches_samples(self):
        # The sampled gradient is exact for the grid-summed expansion:
        # sum_w [2 Re tr(hat0* Q) + tr(Q* hat1 Q hat2)](i w).
        sp = scalar_problem()
        q = random_parameter(21, order=2)
        delta = random_parameter(22, order=2)
        h0, h1, h2 = sp.hat_samples()

        def grid_functional(p):
            pw = p.evaluate(sp.grid)
            ph = pw.conj().swapaxes(1, 2)
            lin = 2.0 * np.einsum("wab,wab->", h0.conj(), pw).real
            quad = np.einsum("wab,wab->", pw.conj(), h1 @ pw @ h2).real
            return lin + quad

        h = 1e-6
        up = YoulaParameter(1.0, q.coeffs + h * delta.coeffs)
        dn = YoulaParameter(1.0, q.coeffs - h * delta.coeffs)
        fd = (grid_functional(up) - grid_functional(dn)) / (2.0 * h)
        pairing = np.einsum(
            "wab,wab->", gradient(sp, q).conj(), delta.evaluate(sp.grid)
        ).real
        assert fd == pytest.approx(pairing, rel=1e-6, abs=1e-8)


class TestDescend:
    def test_unconstrained_reaches_normal_equations_minimizer(self):
        sp, q_target = matched_target_problem()
        q0 = YoulaParameter.zero((1, 1), basis_pole=1.0, order=2)
        cfg = DescentConfig(max_iters=200, grad_tol=1e-9)
        q_final, trace = descend(sp, q0, cfg)

        # independent oracle: real normal equations of the grid-sampled
        # quadratic expansion over the stacked coefficient unknowns
        basis = q0.basis(sp.grid)
        h0, h1, h2 = (s[:, 0, 0] for s in sp.hat_samples())
        weight = (h1 * h2).real
        cols = np.vstack(
            [part * basis[:, k] for part in (1.0, 1j) for k in range(3)]
        )
        normal = ((cols.conj() * weight) @ cols.T).real
        linear = 2.0 * (cols @ h0.conj()).real
        x_star = np.linalg.solve(2.0 * normal, -linear)
        oracle = (x_star[:3] + 1j * x_star[3:]).reshape(3, 1, 1)

        assert np.abs(oracle - q_target.coeffs).max() < 1e-8
        assert np.abs(q_final.coeffs - oracle).max() < 1e-5
        assert len(trace) <= 200
        assert np.all(np.diff(trace.cost) <= 1e-12)
        assert trace.cost[-1] < 1e-8

    def test_zero_gradient_terminates_at_start(self):
        sp = dead_exogenous_problem()
        q0 = random_parameter(2, order=2)
        q_final, trace = descend(sp, q0, DescentConfig(max_iters=50))
        assert len(trace) == 1
        assert trace.alpha[0] == 0.0
        assert trace.step_norm[0] == 0.0
        assert np.array_equal(q_final.coeffs, q0.coeffs)
        assert trace.cost[0] == pytest.approx(0.0, abs=1e-15)

    def test_infeasible_start_raises(self):
        sp, _ = mixing_weight_cavity_problem()
        q0 = YoulaParameter.zero((2, 2), order=4)
        with pytest.raises(InfeasibleStart):
            descend(sp, q0, DescentConfig(max_iters=5))

    def test_zero_tolerance_requires_exactly_feasible_start(self):
        sp, q_exact = mixing_weight_cavity_problem()
        with pytest.raises(InfeasibleStart):
            descend(
                sp,
                q_exact,
                DescentConfig(max_iters=2, constraint_tol=0.0),
            )

    def test_constrained_descent_makes_monotone_progress(self):
        sp, q_start = mixing_weight_cavity_problem()
        cfg = DescentConfig(
            max_iters=40,
            grad_tol=1e-6,
            constraint_tol=1e-6,
            correction_period=5,
        )
        q_final, trace = descend(sp, q_start, cfg)
        assert np.all(np.diff(trace.cost) <= 1e-12)
        assert trace.cost[-1] < trace.cost[0] - 1e-3
        assert trace.constraint_residual.max() <= 10.0 * cfg.constraint_tol
        assert constraint_residual(sp.cd, q_final, sp.grid) < 1e-5
        assert len(trace) <= cfg.max_iters

    def test_flat_landscape_stops_at_feasible_optimum(self):
        # scalar-identity weights keep every feasible loop at the same
        # cost, so the exact parameter is already stationary
        sp = cavity_problem()
        q_exact = exact_cavity_parameter(4)
        q_final, trace = descend(
            sp,
            q_exact,
            DescentConfig(max_iters=10, grad_tol=1e-7, constraint_tol=1e-6),
        )
        assert len(trace) == 1
        assert trace.alpha[0] == 0.0
        verdict = validate_result(sp, q_final, grid=sp.grid)
        assert verdict.ok
        assert verdict.membership.in_qhat
        assert verdict.closed_loop_stable

    def test_periodic_correction_keeps_monotonicity(self):
        sp, q_start = mixing_weight_cavity_problem()
        cfg = DescentConfig(
            max_iters=8,
            grad_tol=1e-9,
            constraint_tol=1e-6,
            correction_period=1,
        )
        _, trace = descend(sp, q_start, cfg)
        assert np.all(np.diff(trace.cost) <= 1e-12)
        assert trace.constraint_residual.max() <= 10.0 * cfg.constraint_tol

    def test_corrections_disabled_still_bounded_by_safety(self):
        sp, q_start = mixing_weight_cavity_problem()
        cfg = DescentConfig(
            max_iters=8,
            grad_tol=1e-9,
            constraint_tol=1e-6,
            correction_period=0,
        )
        _, trace = descend(sp, q_start, cfg)
        assert np.all(np.diff(trace.cost) <= 1e-12)
        assert trace.constraint_residual.max() <= 10.0 * cfg.constraint_tol

    def test_stalled_line_search_raises(self):
        sp, _ = matched_target_problem()
        q0 = YoulaParameter.zero((1, 1), order=2)
        cfg = DescentConfig(alpha0=1e12, max_iters=3, grad_tol=1e-12)
        with pytest.raises(StalledLineSearch):
            descend(sp, q0, cfg)

    def test_trace_is_consistent(self):
        sp, q_start = mixing_weight_cavity_problem()
        cfg = DescentConfig(max_iters=6, grad_tol=1e-9, constraint_tol=1e-6)
        _, trace = descend(sp, q_start, cfg)
        assert isinstance(trace, DescentTrace)
        assert np.array_equal(trace.iteration, np.arange(len(trace)))
        rows = list(trace.rows())
        assert len(rows) == len(trace)
        assert all(len(r) == 6 for r in rows)
        assert np.all(trace.alpha[:-1] > 0)

    def test_rejects_wrong_shape_and_type(self):
        sp, _ = mixing_weight_cavity_problem()
        with pytest.raises(DimensionMismatch):
            descend(sp, YoulaParameter.zero((1, 1), order=2))
        with pytest.raises(TypeError):
            descend(sp, identity_system(2))

    @pytest.mark.parametrize(
        "bad",
        [
            dict(alpha0=0.0),
            dict(alpha0=-1.0),
            dict(backtrack_ratio=1.0),
            dict(backtrack_ratio=0.0),
            dict(max_iters=0),
            dict(grad_tol=-1e-9),
            dict(constraint_tol=-1.0),
            dict(correction_period=-1),
        ],
    )
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            DescentConfig(**bad)


class TestValidateResult:
    def test_accepts_exact_cavity_parameter(self):
        sp = cavity_problem()
        verdict = validate_result(sp, exact_cavity_parameter(1))
        assert verdict.ok
        assert verdict.membership.in_q and verdict.membership.in_qhat
        assert verdict.closed_loop_stable
        assert verdict.closed_loop_abscissa < -0.1

    def test_flags_infeasible_parameter(self):
        sp = cavity_problem()
        verdict = validate_result(sp, YoulaParameter.zero((2, 2), order=1))
        assert not verdict.membership.in_q
        assert not verdict.ok
        # the loop itself is still stable: zero parameter is the central
        # controller, which for this stable plant is the open loop
        assert verdict.closed_loop_stable
