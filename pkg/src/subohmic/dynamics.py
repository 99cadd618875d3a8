"""Explicit equations of motion and the fixed-step RK4 propagator.

The stationary-action conditions for the ansatz parameters couple the
amplitude and displacement derivatives implicitly.  Dividing the displacement
equations by the amplitudes and substituting them back into the amplitude
equations once (see docs/equations_of_motion.md) yields the explicit first
order system integrated here.  The substitution introduces the amplitude
ratios B/A and A/B; these are singular whenever one spin branch empties, a
known artifact of the single-configuration ansatz, so the inverse amplitudes
are clamped at ``epsilon_amp`` and every activation is counted and reported
rather than hidden.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import _kernels
from .bath import DiscreteBath
from .deviation import relative_deviation
from .state import ObservableRecord, VariationalState, bath_energy, entropy, observables, total_energy

__all__ = [
    "StateDerivative",
    "IntegratorConfig",
    "Trajectory",
    "NormDriftError",
    "eom_rhs",
    "integrate",
    "classify_dynamics",
    "classify_series",
    "first_minimum_time",
    "dominant_frequency",
    "steady_value",
    "trajectory_difference",
]


class NormDriftError(RuntimeError):
    """Norm left the configured tolerance band; integration was aborted."""

    def __init__(self, t: float, drift: float, bound: float):
        super().__init__(
            f"norm drift {drift:.3e} exceeded bound {bound:.3e} at t = {t:.6g}"
        )
        self.t = t
        self.drift = drift


@dataclass
class StateDerivative:
    """Explicit time derivatives (dA/dt, dB/dt, {df_l/dt}, {dg_l/dt}).

    ``regularized`` is set when the amplitude clamp was active at this
    evaluation point (and the tunneling term actually carries it).
    """

    da: complex
    db: complex
    df: np.ndarray
    dg: np.ndarray
    regularized: bool = False


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings (times in units of 1/omega_c)."""

    dt: float = 0.01
    t_max: float = 40.0
    record_every: int = 10
    epsilon_amp: float = 1e-8
    norm_drift_tol: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_max > 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        if self.epsilon_amp < 0:
            raise ValueError(f"epsilon_amp must be >= 0, got {self.epsilon_amp}")
        if not self.norm_drift_tol > 0:
            raise ValueError(f"norm_drift_tol must be positive, got {self.norm_drift_tol}")


@dataclass
class Trajectory:
    """Recorded observables of one run, column-wise."""

    t: np.ndarray
    p_x: np.ndarray
    p_y: np.ndarray
    p_z: np.ndarray
    entropy: np.ndarray
    sigma: np.ndarray
    e_total: np.ndarray
    e_bath: np.ndarray
    norm: np.ndarray
    delta: float
    sigma_enabled: bool
    sigma_defined: bool
    e_bath_average: float | None
    regularization_events: int
    first_regularization_time: float | None
    residual_norm_sq: np.ndarray | None
    final_state: VariationalState = field(repr=False)

    @property
    def records(self) -> list[ObservableRecord]:
        return [
            ObservableRecord(
                t=float(self.t[i]),
                p_x=float(self.p_x[i]),
                p_y=float(self.p_y[i]),
                p_z=float(self.p_z[i]),
                entropy=float(self.entropy[i]),
                sigma=float(self.sigma[i]),
                e_total=float(self.e_total[i]),
                e_bath=float(self.e_bath[i]),
                norm=float(self.norm[i]),
            )
            for i in range(self.t.size)
        ]

    def columns(self) -> dict[str, np.ndarray]:
        """Output-schema column order."""
        return {
            "t": self.t,
            "p_z": self.p_z,
            "p_x": self.p_x,
            "p_y": self.p_y,
            "entropy": self.entropy,
            "sigma": self.sigma,
            "e_total": self.e_total,
            "e_bath": self.e_bath,
            "norm": self.norm,
        }


def eom_rhs(
    state: VariationalState,
    bath: DiscreteBath,
    delta: float,
    epsilon_amp: float = 1e-8,
) -> StateDerivative:
    """Evaluate the explicit equations of motion at one state."""
    if state.n_modes != bath.n_modes:
        raise ValueError(
            f"state has {state.n_modes} modes but bath has {bath.n_modes}"
        )
    if not (math.isfinite(abs(state.a)) and math.isfinite(abs(state.b))):
        raise ValueError("amplitudes must be finite")
    df = np.empty(state.n_modes, dtype=np.complex128)
    dg = np.empty(state.n_modes, dtype=np.complex128)
    da, db, reg = _kernels.rhs_kernel(
        complex(state.a),
        complex(state.b),
        state.f,
        state.g,
        bath.omega,
        bath.coupling,
        float(delta),
        float(epsilon_amp) ** 2,
        df,
        dg,
    )
    return StateDerivative(da=da, db=db, df=df, dg=dg, regularized=bool(reg))


def integrate(
    initial: VariationalState,
    bath: DiscreteBath,
    delta: float,
    config: IntegratorConfig,
    compute_sigma: bool = False,
    sigma_average: str = "full",
    on_record=None,
) -> Trajectory:
    """Propagate the ansatz with fixed-step classical RK4.

    Records every ``config.record_every``-th step (plus the final step).
    With ``compute_sigma`` the Schroedinger-residual norm is evaluated at
    every record and converted to the relative deviation sigma(t) in a
    post-pass once the bath-energy average over the run is known; this
    roughly doubles the per-record cost.  ``on_record``, if given, is called
    as ``on_record(record, state)`` with each freshly recorded
    ObservableRecord (sigma still unset) and a state view over the live
    integration buffers (copy it to keep it).

    Raises NormDriftError when |A|^2 + |B|^2 leaves the configured band, and
    warns if t_max is not safely below the bath recurrence time or if the
    amplitude regularization engaged.
    """
    if initial.n_modes != bath.n_modes:
        raise ValueError("initial state and bath disagree on the number of modes")
    if config.dt * bath.omega_max >= 0.5:
        raise ValueError(
            f"dt = {config.dt} cannot resolve omega_max = {bath.omega_max}"
            f" (need dt * omega_max < 0.5)"
        )
    if abs(initial.norm - 1.0) > 1e-8:
        raise ValueError(f"initial state is not normalized: |A|^2+|B|^2 = {initial.norm}")
    if config.t_max >= bath.recurrence_time:
        warnings.warn(
            f"t_max = {config.t_max:g} reaches the recurrence time"
            f" T_p = {bath.recurrence_time:g}; results beyond T_p are artifacts",
            stacklevel=2,
        )

    dt = config.dt
    n_steps = int(round(config.t_max / dt))
    eps_sq = float(config.epsilon_amp) ** 2
    delta = float(delta)

    a = complex(initial.a)
    b = complex(initial.b)
    f = initial.f.copy()
    g = initial.g.copy()
    n = bath.n_modes
    fs = np.empty(n, dtype=np.complex128)
    gs = np.empty(n, dtype=np.complex128)
    fa = np.zeros(n, dtype=np.complex128)
    ga = np.zeros(n, dtype=np.complex128)
    omega, lam = bath.omega, bath.coupling

    record_steps = list(range(0, n_steps, config.record_every))
    if not record_steps or record_steps[-1] != n_steps:
        record_steps.append(n_steps)
    record_at = set(record_steps)
    n_rec = len(record_steps)

    cols = {
        name: np.empty(n_rec)
        for name in ("t", "p_x", "p_y", "p_z", "entropy", "e_total", "e_bath", "norm")
    }
    residual = np.empty(n_rec) if compute_sigma else None

    reg_events = 0
    first_reg_time: float | None = None
    norm0 = initial.norm
    i_rec = 0

    def record(step_index: int):
        nonlocal i_rec
        st = VariationalState(a, b, f, g, t=step_index * dt)
        p_x, p_y, p_z = observables(st)
        cols["t"][i_rec] = st.t
        cols["p_x"][i_rec] = p_x
        cols["p_y"][i_rec] = p_y
        cols["p_z"][i_rec] = p_z
        cols["entropy"][i_rec] = entropy(st)
        cols["e_total"][i_rec] = total_energy(st, bath, delta)
        cols["e_bath"][i_rec] = bath_energy(st, bath)
        cols["norm"][i_rec] = st.norm
        if compute_sigma:
            residual[i_rec] = _kernels.residual_norm_sq_on_shell(
                a, b, f, g, lam, delta, eps_sq
            )
        if on_record is not None:
            record_row = ObservableRecord(
                t=st.t,
                p_x=p_x,
                p_y=p_y,
                p_z=p_z,
                entropy=cols["entropy"][i_rec],
                sigma=math.nan,
                e_total=cols["e_total"][i_rec],
                e_bath=cols["e_bath"][i_rec],
                norm=cols["norm"][i_rec],
            )
            # st wraps the live integration buffers: callbacks that keep it
            # must copy().
            on_record(record_row, st)
        i_rec += 1

    for k in range(n_steps):
        if k in record_at:
            record(k)
        a, b, events = _kernels.rk4_step(
            a, b, f, g, omega, lam, delta, eps_sq, dt, fs, gs, fa, ga
        )
        if events:
            reg_events += events
            if first_reg_time is None:
                first_reg_time = k * dt
        nrm = a.real * a.real + a.imag * a.imag + b.real * b.real + b.imag * b.imag
        drift = abs(nrm - norm0)
        if not math.isfinite(nrm) or drift > config.norm_drift_tol:
            raise NormDriftError((k + 1) * dt, drift, config.norm_drift_tol)
    record(n_steps)

    if reg_events:
        warnings.warn(
            f"amplitude regularization engaged on {reg_events} RK4 stage(s),"
            f" first at t = {first_reg_time:g}",
            stacklevel=2,
        )

    sigma_defined = False
    e_bath_average = None
    if compute_sigma:
        sigma, e_bath_average, sigma_defined = relative_deviation(
            cols["t"], residual, cols["e_bath"], mode=sigma_average
        )
    else:
        sigma = np.full(n_rec, math.nan)

    return Trajectory(
        t=cols["t"],
        p_x=cols["p_x"],
        p_y=cols["p_y"],
        p_z=cols["p_z"],
        entropy=cols["entropy"],
        sigma=sigma,
        e_total=cols["e_total"],
        e_bath=cols["e_bath"],
        norm=cols["norm"],
        delta=delta,
        sigma_enabled=compute_sigma,
        sigma_defined=sigma_defined,
        e_bath_average=e_bath_average,
        regularization_events=reg_events,
        first_regularization_time=first_reg_time,
        residual_norm_sq=residual,
        final_state=VariationalState(a, b, f, g, t=n_steps * dt),
    )


def classify_series(
    t: np.ndarray,
    p_z: np.ndarray,
    delta: float,
    prominence: float = 1e-3,
) -> str:
    """Classify a P_z(t) series as ``coherent`` or ``incoherent``.

    Counts local extrema (sign changes of dP_z/dt) after the initial
    transient t > 1/delta, keeping only extrema whose prominence exceeds the
    threshold; two or more surviving extrema mean coherent oscillation.
    Requires the series to span at least five bare Rabi periods.
    """
    t = np.asarray(t, dtype=float)
    p_z = np.asarray(p_z, dtype=float)
    span_needed = 10.0 * math.pi / delta
    if t[-1] - t[0] < span_needed * (1.0 - 1e-9):
        raise ValueError(
            f"series spans {t[-1] - t[0]:g} but classification needs"
            f" >= 5 Rabi periods = {span_needed:g}"
        )
    x = p_z[t > 1.0 / delta]
    maxima, _ = find_peaks(x, prominence=prominence)
    minima, _ = find_peaks(-x, prominence=prominence)
    n_extrema = maxima.size + minima.size
    return "coherent" if n_extrema >= 2 else "incoherent"


def classify_dynamics(trajectory: Trajectory, prominence: float = 1e-3) -> str:
    """Classify a trajectory's population dynamics; see classify_series."""
    return classify_series(trajectory.t, trajectory.p_z, trajectory.delta, prominence)


def first_minimum_time(t: np.ndarray, x: np.ndarray, prominence: float = 1e-3) -> float | None:
    """Time of the first prominent local minimum of x(t), or None."""
    minima, _ = find_peaks(-np.asarray(x, dtype=float), prominence=prominence)
    if minima.size == 0:
        return None
    return float(np.asarray(t)[minima[0]])


def dominant_frequency(t: np.ndarray, x: np.ndarray, skip: float = 0.0) -> float:
    """Angular frequency of the strongest spectral component of x(t) - mean.

    ``skip`` discards an initial transient before the Fourier analysis.
    The series must be uniformly sampled (which trajectory records are).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    sel = t >= skip
    xs = x[sel]
    ts = t[sel]
    if xs.size < 4:
        raise ValueError("too few samples for a spectral estimate")
    spectrum = np.abs(np.fft.rfft(xs - xs.mean()))
    freqs = np.fft.rfftfreq(xs.size, d=ts[1] - ts[0])
    peak = int(np.argmax(spectrum[1:])) + 1  # skip the DC bin
    return float(2.0 * math.pi * freqs[peak])


def steady_value(t: np.ndarray, x: np.ndarray, fraction: float = 0.25) -> float:
    """Mean of x over the final ``fraction`` of the time window."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    t_cut = t[-1] - fraction * (t[-1] - t[0])
    return float(np.mean(x[t >= t_cut]))


def trajectory_difference(
    t: np.ndarray, x1: np.ndarray, x2: np.ndarray
) -> dict[str, float]:
    """Max and time-integrated absolute difference of two aligned series.

    Used both for initial-condition comparisons and for convergence studies
    across n_modes (run two baths on the same grid and diff the traces).
    """
    d = np.abs(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    return {
        "max_abs_diff": float(np.max(d)),
        "integrated_abs_diff": float(np.trapezoid(d, np.asarray(t, dtype=float))),
    }
