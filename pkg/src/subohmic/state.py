"""Variational state of the two-branch coherent-state ansatz and its functionals.

The trial state is

    |D(t)> = A(t) |+> |f(t)>  +  B(t) |-> |g(t)>

where |f> and |g> are multimode coherent states (displaced vacua) with complex
displacement vectors f_l, g_l.  Everything observable about the state reduces
to a handful of O(n_modes) mode sums; the overlap of the two bath branches is
always handled through its log-domain exponent

    E = sum_l [ conj(f_l) g_l - (|f_l|^2 + |g_l|^2) / 2 ],      <f|g> = exp(E),

because with tens of thousands of modes the per-mode overlap factors underflow
long before the exponent loses accuracy (Re E <= 0 always).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bath import DiscreteBath

__all__ = [
    "VariationalState",
    "ObservableRecord",
    "InternalConsistencyError",
    "init_state",
    "overlap_exponent",
    "observables",
    "entropy",
    "total_energy",
    "bath_energy",
    "displacement_gap",
]

LN2 = math.log(2.0)


class InternalConsistencyError(RuntimeError):
    """An analytically impossible value was produced (beyond roundoff slack)."""


@dataclass
class VariationalState:
    """Ansatz parameters (A, B, {f_l}, {g_l}) at one instant of time.

    |A|^2 + |B|^2 = 1 at initialization; the integrator monitors but never
    renormalizes it.
    """

    a: complex
    b: complex
    f: np.ndarray
    g: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.f = np.ascontiguousarray(self.f, dtype=np.complex128)
        self.g = np.ascontiguousarray(self.g, dtype=np.complex128)
        if self.f.shape != self.g.shape or self.f.ndim != 1:
            raise ValueError("f and g must be 1-d arrays of identical length")

    @property
    def n_modes(self) -> int:
        return self.f.size

    @property
    def norm(self) -> float:
        """|A|^2 + |B|^2 (diagnostic; conserved by the equations of motion)."""
        return abs(self.a) ** 2 + abs(self.b) ** 2

    def copy(self) -> "VariationalState":
        return VariationalState(self.a, self.b, self.f.copy(), self.g.copy(), self.t)


@dataclass
class ObservableRecord:
    """One output row of a trajectory."""

    t: float
    p_x: float
    p_y: float
    p_z: float
    entropy: float
    sigma: float
    e_total: float
    e_bath: float
    norm: float


def init_state(condition: str, bath: DiscreteBath) -> VariationalState:
    """Initial state with the spin in |+> (A=1, B=0) and the stated bath.

    ``factorized``: bath in its vacuum, f_l = g_l = 0.
    ``polarized``:  bath pre-equilibrated to the initial spin state, i.e. the
    displaced-oscillator configuration f_l = g_l = -lambda_l / (2 omega_l).
    """
    n = bath.n_modes
    if condition == "factorized":
        f = np.zeros(n, dtype=np.complex128)
        g = np.zeros(n, dtype=np.complex128)
    elif condition == "polarized":
        shift = -bath.coupling / (2.0 * bath.omega)
        f = shift.astype(np.complex128)
        g = shift.astype(np.complex128)
    else:
        raise ValueError(f"unknown initial condition {condition!r}")
    return VariationalState(a=1.0 + 0.0j, b=0.0j, f=f, g=g, t=0.0)


def overlap_exponent(state: VariationalState) -> complex:
    """Complex exponent E of the branch overlap <f|g> = exp(E).

    Re(E) <= 0 by Cauchy-Schwarz; the overlap factor itself may underflow,
    the exponent never does.
    """
    f, g = state.f, state.g
    return complex(
        np.vdot(f, g) - 0.5 * (np.vdot(f, f).real + np.vdot(g, g).real)
    )


def displacement_gap(state: VariationalState) -> float:
    """sum_l |f_l - g_l|^2, the squared distance between the two branches."""
    d = state.f - state.g
    return float(np.vdot(d, d).real)


def observables(state: VariationalState) -> tuple[float, float, float]:
    """Spin expectations (P_x, P_y, P_z).

    P_z = |A|^2 - |B|^2, P_x = 2 Re[conj(A) B exp(E)],
    P_y = 2 Im[conj(A) B exp(E)] with E the overlap exponent.
    """
    coherence = np.conj(state.a) * state.b * np.exp(overlap_exponent(state))
    p_x = 2.0 * coherence.real
    p_y = 2.0 * coherence.imag
    p_z = abs(state.a) ** 2 - abs(state.b) ** 2
    return float(p_x), float(p_y), float(p_z)


def entropy(state: VariationalState) -> float:
    """Von Neumann entanglement entropy of the spin (nats, in [0, ln 2]).

    The reduced 2x2 density matrix has eigenvalues

        w_pm = 1/2 +- 1/2 sqrt(1 + 4 |A|^2 |B|^2 (exp(-sum|f-g|^2) - 1))

    and S = -w_+ ln w_+ - w_- ln w_-, with the 0 ln 0 = 0 convention at the
    boundary.
    """
    ab2 = (abs(state.a) * abs(state.b)) ** 2
    arg = 1.0 + 4.0 * ab2 * math.expm1(-displacement_gap(state))
    if arg < -1e-12:
        raise InternalConsistencyError(
            f"entropy sqrt argument {arg} is negative beyond roundoff"
        )
    root = math.sqrt(max(arg, 0.0))
    s = 0.0
    for w in (0.5 + 0.5 * root, 0.5 - 0.5 * root):
        if w > 1e-15 and w < 1.0 - 1e-15:
            s -= w * math.log(w)
    return s


def total_energy(state: VariationalState, bath: DiscreteBath, delta: float) -> float:
    """Energy expectation of the ansatz state.

    <H> = sum_l omega_l (|A|^2 |f_l|^2 + |B|^2 |g_l|^2)
          - delta Re[conj(A) B exp(E)]
          + sum_l lambda_l (|A|^2 Re f_l - |B|^2 Re g_l)
    """
    aa = abs(state.a) ** 2
    bb = abs(state.b) ** 2
    omega, lam = bath.omega, bath.coupling
    diag = aa * np.dot(omega, np.abs(state.f) ** 2) + bb * np.dot(omega, np.abs(state.g) ** 2)
    drive = np.dot(lam, aa * state.f.real - bb * state.g.real)
    flip = np.conj(state.a) * state.b * np.exp(overlap_exponent(state))
    return float(diag + drive - delta * flip.real)


def bath_energy(state: VariationalState, bath: DiscreteBath) -> float:
    """Boson-term energy sum_l omega_l (|A|^2 |f_l|^2 + |B|^2 |g_l|^2), >= 0."""
    aa = abs(state.a) ** 2
    bb = abs(state.b) ** 2
    omega = bath.omega
    return float(aa * np.dot(omega, np.abs(state.f) ** 2) + bb * np.dot(omega, np.abs(state.g) ** 2))
