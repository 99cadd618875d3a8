"""Relative deviation: how faithfully the ansatz follows the Schroedinger equation.

The residual vector of the trial state is |delta> = (i d/dt - H)|D>, and its
squared norm splits into three groups,

    <delta|delta> = <dD|dD> + <D|H^2|D> + 2 Im <D|H|dD>,

each of which reduces to closed-form single-mode sums over the coherent-state
parameters (the double-mode sums factorize, so the cost per evaluation is
O(n_modes); the derivation is in docs/deviation_closed_form.md and is verified
against a brute-force Fock-space evaluation in the test suite, not assumed).

The dimensionless relative deviation reported per trajectory is

    sigma(t) = sqrt(<delta(t)|delta(t)>) / Ebar_bath

where Ebar_bath is the time-averaged bath energy over the simulated interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bath import DiscreteBath
from .state import InternalConsistencyError, VariationalState

__all__ = [
    "DeviationBreakdown",
    "deviation_breakdown",
    "deviation_norm_squared",
    "residual_norm_squared_on_shell",
    "relative_deviation",
    "clamp_residual_norm_sq",
]

# Ebar_bath below this is treated as "no bath energy scale": sigma undefined.
EBATH_FLOOR = 1e-12


@dataclass
class DeviationBreakdown:
    """The three closed-form groups and their sum <delta|delta> >= 0."""

    dd: float       # <dD|dD>
    hh: float       # <D|H^2|D>
    cross: float    # 2 Im <D|H|dD>
    delta_norm_sq: float
    e_bath_avg: float | None = None
    sigma: float | None = None


def clamp_residual_norm_sq(dd: float, hh: float, cross: float) -> float:
    """Assemble <delta|delta>, clamping roundoff negatives and rejecting worse.

    dd and hh are squared norms, so dd + hh bounds the achievable cancellation;
    a total below -1e-6 of that scale cannot be roundoff.
    """
    total = dd + hh + cross
    scale = dd + hh
    if total < -1e-6 * scale:
        raise InternalConsistencyError(
            f"residual norm^2 = {total} is negative beyond roundoff"
            f" (dd={dd}, hh={hh}, cross={cross})"
        )
    return max(total, 0.0)


def deviation_breakdown(
    state: VariationalState,
    derivative,
    bath: DiscreteBath,
    delta: float,
) -> DeviationBreakdown:
    """Evaluate the closed-form residual pieces for one state/derivative pair."""
    if state.n_modes != bath.n_modes:
        raise ValueError("state and bath disagree on the number of modes")
    dd, hh, cross = _kernels.deviation_terms_kernel(
        complex(state.a),
        complex(state.b),
        state.f,
        state.g,
        complex(derivative.da),
        complex(derivative.db),
        np.ascontiguousarray(derivative.df, dtype=np.complex128),
        np.ascontiguousarray(derivative.dg, dtype=np.complex128),
        bath.omega,
        bath.coupling,
        float(delta),
    )
    return DeviationBreakdown(
        dd=dd, hh=hh, cross=cross, delta_norm_sq=clamp_residual_norm_sq(dd, hh, cross)
    )


def deviation_norm_squared(
    state: VariationalState,
    derivative,
    bath: DiscreteBath,
    delta: float,
) -> float:
    """<delta|delta> for a state and the derivative evaluated at it."""
    return deviation_breakdown(state, derivative, bath, delta).delta_norm_sq


def residual_norm_squared_on_shell(
    state: VariationalState,
    bath: DiscreteBath,
    delta: float,
    epsilon_amp: float = 1e-8,
) -> float:
    """<delta|delta> with the derivative implied by the equations of motion.

    Algebraically identical to deviation_norm_squared(state, eom_rhs(state),
    ...) but assembled in a form whose terms all carry the tunneling amplitude
    or the branch gap, so the exactly-solvable limits evaluate to a clean
    zero.  This is the evaluation used for sigma(t) along trajectories.
    """
    if state.n_modes != bath.n_modes:
        raise ValueError("state and bath disagree on the number of modes")
    return float(
        _kernels.residual_norm_sq_on_shell(
            complex(state.a),
            complex(state.b),
            state.f,
            state.g,
            bath.coupling,
            float(delta),
            float(epsilon_amp) ** 2,
        )
    )


def relative_deviation(
    t: np.ndarray,
    residual_norm_sq: np.ndarray,
    e_bath: np.ndarray,
    mode: str = "full",
) -> tuple[np.ndarray, float, bool]:
    """Convert per-record <delta|delta> into the sigma(t) series.

    ``mode="full"`` (the default) divides by the bath-energy average over the
    whole interval, so sigma values are final only once the run completes;
    ``mode="running"`` divides by the average up to each record instead, kept
    for sensitivity checks.  Returns (sigma, Ebar_bath, defined); when the
    averaged bath energy is below 1e-12 (a decoupled bath), sigma is NaN and
    ``defined`` is False instead of dividing by zero.
    """
    t = np.asarray(t, dtype=float)
    residual_norm_sq = np.asarray(residual_norm_sq, dtype=float)
    e_bath = np.asarray(e_bath, dtype=float)
    root = np.sqrt(residual_norm_sq)

    if mode == "full":
        span = t[-1] - t[0]
        ebar = float(np.trapezoid(e_bath, t) / span) if span > 0 else float(e_bath[0])
        if ebar < EBATH_FLOOR:
            return np.full(t.size, math.nan), ebar, False
        return root / ebar, ebar, True
    if mode == "running":
        cumulative = np.concatenate(
            ([e_bath[0]], np.cumsum(0.5 * (e_bath[1:] + e_bath[:-1]) * np.diff(t)))
        )
        span = t - t[0]
        ebar_t = np.where(span > 0, cumulative / np.where(span > 0, span, 1.0), e_bath[0])
        sigma = np.where(ebar_t >= EBATH_FLOOR, root / np.where(ebar_t >= EBATH_FLOOR, ebar_t, 1.0), math.nan)
        ebar = float(ebar_t[-1])
        return sigma, ebar, bool(ebar >= EBATH_FLOOR)
    raise ValueError(f"unknown averaging mode {mode!r}")
