"""Open quantum harmonic networks: SLH data, transfer models, realizability.

A linear quantum network with ``n`` modes and ``m`` field channels is
specified by a scattering unitary S, coupling coefficients (L1, L2) and
Hamiltonian coefficients (H1, H2), all taken in doubled-up
annihilation/creation coordinates.  The induced input-output model is

    A = -i*Theta*H - (1/2)*Theta*L#*J*L
    B = -Theta*L#*J*[[S, 0], [0, conj(S)]]
    C = L
    D = [[S, 0], [0, conj(S)]]

with ``L = [[L1, L2], [conj(L2), conj(L1)]]``, ``H`` doubled likewise,
``J = diag(I_m, -I_m)`` and the commutation kernel ``Theta = F J_n F#``.

Such models are exactly the (J, J)-unitary transfer matrices whose
feedthrough is a doubled-up scattering unitary; ``check_physical_
realizability`` measures how far an arbitrary model is from that class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSlh
from .norms import is_spectrally_generic
from .statespace import (
    StateSpace,
    doubled,
    log_grid,
    minimal_realization,
    signature_matrix,
    validate_grid,
)

__all__ = [
    "SlhModel",
    "slh_to_statespace",
    "default_pr_grid",
    "j_unitarity_residual",
    "PrVerdict",
    "check_physical_realizability",
]

DEFAULT_PR_TOL = 1e-7


def default_pr_grid():
    """64 log-spaced points per decade over [1e-3, 1e3]."""
    return log_grid(1e-3, 1e3, 6 * 64 + 1)


@dataclass
class SlhModel:
    """Doubled-up SLH description of a linear quantum network.

    Parameters
    ----------
    s : (m, m) array_like
        Scattering unitary among the field channels.
    l1, l2 : (m, n) array_like
        Coupling coefficients (annihilation / creation parts).
    h1, h2 : (n, n) array_like, optional
        Hamiltonian coefficients; ``h1`` must be Hermitian and ``h2``
        symmetric so the doubled Hamiltonian is Hermitian.  Default zero.
    f1, f2 : (n, n) array_like, optional
        Mode-basis coefficients entering the commutation kernel
        ``Theta = F J F#``; defaults give canonical modes (Theta = J).
    """

    s: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    h1: np.ndarray | None = None
    h2: np.ndarray | None = None
    f1: np.ndarray | None = None
    f2: np.ndarray | None = None
    unitarity_tol: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        self.s = np.atleast_2d(np.asarray(self.s, dtype=np.complex128))
        self.l1 = np.atleast_2d(np.asarray(self.l1, dtype=np.complex128))
        self.l2 = np.atleast_2d(np.asarray(self.l2, dtype=np.complex128))
        m = self.s.shape[0]
        n = self.l1.shape[1]
        if self.s.shape != (m, m):
            raise InvalidSlh(f"scattering matrix must be square, got {self.s.shape}")
        if self.l1.shape != (m, n) or self.l2.shape != (m, n):
            raise InvalidSlh("coupling blocks must both be (m, n)")
        for name in ("h1", "h2", "f1", "f2"):
            val = getattr(self, name)
            if val is None:
                if name in ("h1", "h2"):
                    val = np.zeros((n, n), dtype=np.complex128)
                else:
                    val = (
                        np.eye(n, dtype=np.complex128)
                        if name == "f1"
                        else np.zeros((n, n), dtype=np.complex128)
                    )
            else:
                val = np.atleast_2d(np.asarray(val, dtype=np.complex128))
                if val.shape != (n, n):
                    raise InvalidSlh(f"{name} must be (n, n) = ({n}, {n})")
            setattr(self, name, val)
        gap = np.abs(self.s.conj().T @ self.s - np.eye(m)).max() if m else 0.0
        if gap > self.unitarity_tol:
            raise InvalidSlh(f"scattering matrix not unitary: |S#S - I| = {gap:.2e}")
        hd = doubled(self.h1, self.h2)
        herm_gap = np.abs(hd - hd.conj().T).max() if hd.size else 0.0
        if herm_gap > self.unitarity_tol * max(1.0, np.abs(hd).max(initial=0.0)):
            raise InvalidSlh(
                f"doubled Hamiltonian not Hermitian: residual {herm_gap:.2e}"
            )
        fd = doubled(self.f1, self.f2)
        if n and np.linalg.cond(fd) > 1e12:
            raise InvalidSlh("mode-basis matrix F is (near-)singular")

    @property
    def n_modes(self):
        return self.l1.shape[1]

    @property
    def n_fields(self):
        return self.s.shape[0]

    def coupling(self):
        return doubled(self.l1, self.l2)

    def hamiltonian(self):
        return doubled(self.h1, self.h2)

    def mode_basis(self):
        return doubled(self.f1, self.f2)

    def commutation_kernel(self):
        """Theta = F J F# (Hermitian; equals J for canonical modes)."""
        f = self.mode_basis()
        return f @ signature_matrix(self.n_modes) @ f.conj().T

    def scattering_feedthrough(self):
        return doubled(self.s, np.zeros_like(self.s))


def slh_to_statespace(model):
    """Input-output state-space model of an SLH network (doubled-up)."""
    n, m = model.n_modes, model.n_fields
    jm = signature_matrix(m)
    lmat = model.coupling()
    hmat = model.hamiltonian()
    theta = model.commutation_kernel()
    dmat = model.scattering_feedthrough()
    lh = lmat.conj().T @ jm
    a = -1j * theta @ hmat - 0.5 * theta @ lh @ lmat
    b = -theta @ lh @ dmat
    if n == 0:
        a = np.zeros((0, 0), dtype=np.complex128)
        b = np.zeros((0, 2 * m), dtype=np.complex128)
    return StateSpace(a, b, lmat, dmat)


def j_unitarity_residual(sys, grid=None, form="left"):
    """Peak deviation from (J, J)-unitarity on a frequency grid.

    ``form="left"`` measures ``max_w ||G(iw)* J G(iw) - J||_F`` and
    ``form="right"`` the dual ``max_w ||G(iw) J G(iw)* - J||_F``.
    The model must be square with an even number of channels.
    """
    p, m = sys.shape
    if p != m or p % 2:
        raise ValueError(f"need a square doubled-up model, got shape {(p, m)}")
    j = signature_matrix(m // 2)
    if grid is None:
        grid = default_pr_grid()
    grid = validate_grid(grid)
    resp = sys.response(grid)
    if form == "left":
        gap = np.einsum("kij,il,klm->kjm", resp.conj(), j, resp) - j
    elif form == "right":
        gap = np.einsum("kij,jl,kml->kim", resp, j, resp.conj()) - j
    else:
        raise ValueError("form must be 'left' or 'right'")
    return float(np.sqrt(np.sum(np.abs(gap) ** 2, axis=(1, 2))).max())


@dataclass
class PrVerdict:
    """Outcome of a physical-realizability check.

    ``is_physically_realizable`` requires all four flags; the measured
    quantities are kept so callers can report how close a failure was.
    """

    residual: float
    residual_ok: bool
    feedthrough_gap: float
    feedthrough_ok: bool
    generic_ok: bool
    minimal_ok: bool
    n_states_minimal: int
    scattering: np.ndarray

    @property
    def is_physically_realizable(self):
        return bool(
            self.residual_ok and self.feedthrough_ok and self.generic_ok and self.minimal_ok
        )


def check_physical_realizability(sys, grid=None, tol=DEFAULT_PR_TOL):
    """Decide whether a model is realizable as a quantum network.

    Tests, on a minimal realization: (i) the (J, J)-unitarity residual
    on the grid, (ii) that the feedthrough is a doubled-up scattering
    unitary, (iii) spectral genericity of the minimal A, and (iv) that
    the supplied realization was already minimal.  Non-generic or
    non-minimal inputs are reported as such, never repaired.
    """
    p, m = sys.shape
    if p != m or p % 2:
        raise ValueError(f"need a square doubled-up model, got shape {(p, m)}")
    half = m // 2
    reduced = minimal_realization(sys)
    minimal_ok = reduced.n_states == sys.n_states

    residual = j_unitarity_residual(reduced, grid=grid)
    residual_ok = residual <= tol

    d = reduced.d
    s_block = d[:half, :half]
    target = doubled(s_block, np.zeros_like(s_block))
    gap_structure = np.abs(d - target).max() if d.size else 0.0
    gap_unitary = np.abs(s_block.conj().T @ s_block - np.eye(half)).max() if half else 0.0
    feedthrough_gap = float(max(gap_structure, gap_unitary))
    feedthrough_ok = feedthrough_gap <= tol

    generic_ok = is_spectrally_generic(reduced.a)

    return PrVerdict(
        residual=residual,
        residual_ok=residual_ok,
        feedthrough_gap=feedthrough_gap,
        feedthrough_ok=feedthrough_ok,
        generic_ok=generic_ok,
        minimal_ok=minimal_ok,
        n_states_minimal=reduced.n_states,
        scattering=s_block.copy(),
    )
