"""Sub-Ohmic spectral density and its homogeneous discretization.

The bath is specified by the spectral function

    J(omega) = 2 * alpha * omega_c**(1 - s) * omega**s * exp(-omega / omega_c)

with dimensionless exponent ``s`` (0 < s < 1 sub-Ohmic, s = 1 Ohmic),
dimensionless coupling strength ``alpha`` and cutoff frequency ``omega_c``.
Throughout the engine ``omega_c = 1`` sets the energy/time unit.

Discretization places ``n_modes`` harmonic modes on the homogeneous grid
``omega_l = l * delta_omega`` with ``delta_omega = omega_max / n_modes`` and
couplings ``lambda_l**2 = J(omega_l) * delta_omega``.  The grid spacing fixes
the Poincare recurrence time ``T_p = 2 * pi / delta_omega``; trajectories must
stay well below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma, gammainc

__all__ = [
    "SpectralParams",
    "DiscreteBath",
    "spectral_density",
    "discretize_bath",
    "reorganization_energy",
]

DEFAULT_N_MODES = 20000
DEFAULT_OMEGA_MAX_FACTOR = 4.0


@dataclass(frozen=True)
class SpectralParams:
    """Continuous bath description (s, alpha, omega_c)."""

    s: float
    alpha: float
    omega_c: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"spectral exponent must be positive, got s={self.s}")
        if self.alpha < 0:
            raise ValueError(f"coupling strength must be >= 0, got alpha={self.alpha}")
        if not self.omega_c > 0:
            raise ValueError(f"cutoff frequency must be positive, got omega_c={self.omega_c}")


@dataclass(frozen=True)
class DiscreteBath:
    """Homogeneously discretized bath: frequencies, couplings and grid data.

    The arrays are read-only; a bath instance can be shared freely between
    concurrent trajectory runs.
    """

    omega: np.ndarray       # omega[l-1] = l * delta_omega, ascending
    coupling: np.ndarray    # lambda_l = sqrt(J(omega_l) * delta_omega) >= 0
    delta_omega: float
    omega_max: float
    params: SpectralParams = field(repr=False)

    def __post_init__(self):
        self.omega.setflags(write=False)
        self.coupling.setflags(write=False)

    @property
    def n_modes(self) -> int:
        return self.omega.size

    @property
    def recurrence_time(self) -> float:
        """Poincare recurrence time T_p = 2*pi / delta_omega."""
        return 2.0 * math.pi / self.delta_omega

    @property
    def modes(self) -> list[tuple[float, float]]:
        """Ordered (omega_l, lambda_l) pairs."""
        return list(zip(self.omega.tolist(), self.coupling.tolist()))

    def discrete_reorganization_energy(self) -> float:
        """Sum_l lambda_l**2 / omega_l, the discretized J(omega)/omega integral."""
        return float(np.sum(self.coupling**2 / self.omega))


def spectral_density(omega, params: SpectralParams):
    """Evaluate J(omega) = 2 alpha omega_c^(1-s) omega^s exp(-omega/omega_c).

    Accepts a scalar or an array of non-negative frequencies.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0")
    value = (
        2.0
        * params.alpha
        * params.omega_c ** (1.0 - params.s)
        * w**params.s
        * np.exp(-w / params.omega_c)
    )
    return value if value.ndim else float(value)


def discretize_bath(
    params: SpectralParams,
    n_modes: int = DEFAULT_N_MODES,
    omega_max: float | None = None,
) -> DiscreteBath:
    """Discretize the continuum on the homogeneous grid omega_l = l * delta_omega.

    ``omega_max`` defaults to 4 * omega_c.  The continuum tail beyond
    ``omega_max`` is dropped without reweighting; the resulting truncation of
    the reorganization energy is reported by the run metadata, not
    compensated here.
    """
    if n_modes < 1:
        raise ValueError(f"need at least one mode, got n_modes={n_modes}")
    if omega_max is None:
        omega_max = DEFAULT_OMEGA_MAX_FACTOR * params.omega_c
    if not omega_max > 0:
        raise ValueError(f"omega_max must be positive, got {omega_max}")

    delta_omega = omega_max / n_modes
    # l * delta_omega evaluated per mode: exact grid, no cumulative drift.
    omega = np.arange(1, n_modes + 1, dtype=float) * delta_omega
    coupling = np.sqrt(spectral_density(omega, params) * delta_omega)
    return DiscreteBath(
        omega=omega,
        coupling=coupling,
        delta_omega=delta_omega,
        omega_max=omega_max,
        params=params,
    )


def reorganization_energy(params: SpectralParams, omega_max: float | None = None) -> float:
    """Reorganization energy int_0^inf J(omega)/omega domega = 2 alpha omega_c Gamma(s).

    With ``omega_max`` given, returns the integral truncated at omega_max
    (via the regularized lower incomplete gamma function), i.e. the part of
    the reorganization energy representable on a discretization grid.
    """
    full = 2.0 * params.alpha * params.omega_c * gamma(params.s)
    if omega_max is None:
        return float(full)
    return float(full * gammainc(params.s, omega_max / params.omega_c))
