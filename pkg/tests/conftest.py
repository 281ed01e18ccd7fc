"""Shared fixtures: canonical models and seeded random generators."""

import numpy as np
import pytest

from coherentctl.physreal import SlhModel, slh_to_statespace
from coherentctl.statespace import StateSpace


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)


def make_rng(seed):
    return np.random.default_rng(seed)


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_unitary(rng, m):
    q, r = np.linalg.qr(random_complex(rng, (m, m)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_statespace(rng, n, p, m, stable=True, margin=0.2):
    """Random complex model; when stable, spectral abscissa <= -margin."""
    a = random_complex(rng, (n, n)) / max(np.sqrt(n), 1.0)
    if stable and n:
        shift = np.max(np.linalg.eigvals(a).real) + margin + rng.uniform(0.0, 0.5)
        a = a - shift * np.eye(n)
    b = random_complex(rng, (n, m))
    c = random_complex(rng, (p, n))
    d = random_complex(rng, (p, m))
    return StateSpace(a, b, c, d)


def random_slh(rng, n=None, m=None, coupling_scale=1.0):
    """Random doubled-up network data (canonical modes)."""
    n = int(n if n is not None else rng.integers(1, 4))
    m = int(m if m is not None else rng.integers(1, 4))
    s = random_unitary(rng, m)
    x = random_complex(rng, (n, n))
    h1 = 0.5 * (x + x.conj().T)
    y = random_complex(rng, (n, n))
    h2 = 0.5 * (y + y.T)
    l1 = random_complex(rng, (m, n), coupling_scale)
    l2 = random_complex(rng, (m, n), coupling_scale)
    return SlhModel(s=s, l1=l1, l2=l2, h1=h1, h2=h2)


@pytest.fixture
def cavity():
    """Single lossy mode, one field channel, decay rate 2, no detuning."""
    return SlhModel(s=[[1.0]], l1=[[np.sqrt(2.0)]], l2=[[0.0]])


@pytest.fixture
def cavity_model(cavity):
    return slh_to_statespace(cavity)


def cavity_response(omega):
    """Doubled transfer of the rate-2 cavity: ((iw - 1)/(iw + 1)) * I2."""
    g = (1j * omega - 1.0) / (1j * omega + 1.0)
    return g * np.eye(2)


def pointwise(sys, omega):
    """Direct dense-solve oracle for the transfer value (no kernel path)."""
    if sys.n_states == 0:
        return sys.d.copy()
    t = 1j * omega * np.eye(sys.n_states) - sys.a
    return sys.c @ np.linalg.solve(t, sys.b) + sys.d


def coupled_cavity_plant():
    """One mode with two field channels: rate-2 exogenous, rate-1 control."""
    model = SlhModel(
        s=np.eye(2), l1=np.array([[np.sqrt(2.0)], [1.0]]), l2=np.zeros((2, 1))
    )
    return slh_to_statespace(model)


def coupled_cavity_loop():
    """Regrouped plant and verified factor family for the two-channel cavity.

    The plant is already stable, so the factor family is the one with
    zero gains: M = V = I, U = 0, N = P22 = ((s+1/2)/(s+3/2)) I.
    """
    from coherentctl.stabilization import (
        PartitionSpec,
        coprime_factorization,
        modify_plant,
        stabilizing_gains,
    )

    mp = modify_plant(coupled_cavity_plant(), PartitionSpec(n_r=1, n_u=1, n_z=1, n_y=1))
    cf = coprime_factorization(mp, stabilizing_gains(mp))
    return mp, cf


def exact_cavity_parameter(order=1):
    """Feasible parameter for the two-channel cavity: -1/2 - (1/4)/(s+1).

    Corresponds exactly to the static controller K = -I2; padding with
    zero coefficients embeds it in a higher-order basis unchanged.
    """
    from coherentctl.youla_constraint import YoulaParameter

    coeffs = np.zeros((order + 1, 2, 2), dtype=complex)
    coeffs[0] = -0.5 * np.eye(2)
    coeffs[1] = -0.25 * np.eye(2)
    return YoulaParameter(1.0, coeffs)


def lowpass_weight(gain=1.0, pole=10.0):
    """Scalar stable strictly proper weight ``gain * pole / (s + pole)``."""
    return StateSpace([[-pole]], [[pole]], [[gain]], [[0.0]])


def zero_constraints(d):
    """Constraint data whose quadratic form vanishes identically.

    Every parameter is feasible and every direction is tangent, so
    descent against this data is plain (fitted) gradient descent.
    """
    from coherentctl.statespace import zero_system
    from coherentctl.youla_constraint import ConstraintData

    z = zero_system(d, d)
    return ConstraintData(phi=z, lam=z, pi=z, mu=d // 2)


def scalar_demo_loop():
    """Classical one-state unstable loop with the worked factor family.

    Pole at +1; gains F = L = -2 give M = (s-1)/(s+1), N = 1/(s+1),
    U = -4/(s+1), V = (s+3)/(s+1) and the loop triple
    T0 = (s+3)/(s+1)^2, T1 = T2 = 1/(s+1).
    """
    from coherentctl.stabilization import (
        GainPair,
        ModifiedPlant,
        coprime_factorization,
    )

    full = StateSpace(
        [[1.0]], np.ones((1, 2)), np.ones((2, 1)), np.zeros((2, 2))
    )
    mp = ModifiedPlant(full, in_exo=1, in_ctrl=1, out_perf=1, out_meas=1)
    gains = GainPair(f=np.array([[-2.0]]), l=np.array([[-2.0]]))
    return mp, coprime_factorization(mp, gains)


def matched_target_problem():
    """Unconstrained quadratic fixture whose minimizer is known exactly.

    The constant block is chosen as ``-(t1 Q_target t2)`` so the weighted
    loop equals ``t1 (Q - Q_target) t2``: the cost is zero exactly at
    ``Q_target``, whose coefficients live in the rational basis (order
    2, unit pole).  With the 0.7 channel scaling the grid-metric descent
    map contracts every mode at unit step, so plain projected gradient
    descent converges geometrically to the closed-form answer.

    Returns (problem, q_target).
    """
    from coherentctl.h2_synthesis import SynthesisProblem
    from coherentctl.statespace import conjugate_system, log_grid
    from coherentctl.youla_constraint import YoulaParameter

    t = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    bold_t1 = t * 0.7
    bold_t2 = t * 0.7
    q_target = YoulaParameter(
        1.0,
        np.array([[[0.3 + 0.0j]], [[0.5 - 0.2j]], [[-0.2 + 0.1j]]]),
    )
    bold_t0 = -(bold_t1 @ q_target.to_statespace() @ bold_t2)
    sp = SynthesisProblem(
        mp=None,
        cf=None,
        cd=zero_constraints(1),
        w_in=None,
        w_out=None,
        bold_t0=bold_t0,
        bold_t1=bold_t1,
        bold_t2=bold_t2,
        hat_t0=conjugate_system(bold_t1) @ bold_t0 @ conjugate_system(bold_t2),
        hat_t1=conjugate_system(bold_t1) @ bold_t1,
        hat_t2=bold_t2 @ conjugate_system(bold_t2),
        grid=log_grid(1e-2, 1.0, 33),
    )
    return sp, q_target


def mixing_weight_cavity_problem(points=17):
    """Constrained descent fixture with a genuinely sloped landscape.

    The two-channel cavity keeps every feasible loop unitary pointwise,
    so any scalar-multiple-of-identity weighting makes the quadratic
    cost flat along the feasible set.  A channel-mixing (off-diagonal)
    output weight breaks that invariance at first order, giving the
    descent real work to do.  Returns (problem, start) where start is
    the exact parameter embedded in an order-4 basis.
    """
    from coherentctl.h2_synthesis import assemble_problem
    from coherentctl.statespace import hstack_systems, log_grid, vstack_systems
    from coherentctl.youla_constraint import build_constraint_data

    mp, cf = coupled_cavity_loop()
    cd = build_constraint_data(cf)
    w1 = lowpass_weight(0.7, 10.0)
    w2 = lowpass_weight(0.3, 3.0)
    w_out = vstack_systems(
        [hstack_systems([w1, w2]), hstack_systems([w2, w1])]
    )
    sp = assemble_problem(
        mp,
        cf,
        cd,
        w_in=lowpass_weight(0.7, 10.0),
        w_out=w_out,
        grid=log_grid(1e-2, 1e1, points),
    )
    return sp, exact_cavity_parameter(4)
