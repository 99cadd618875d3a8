"""Variational dynamics engine for the zero-temperature sub-Ohmic spin-boson model."""

from .bath import DiscreteBath, SpectralParams, discretize_bath, reorganization_energy, spectral_density
from .deviation import DeviationBreakdown, deviation_breakdown, deviation_norm_squared, relative_deviation
from .dynamics import (
    IntegratorConfig,
    NormDriftError,
    StateDerivative,
    Trajectory,
    classify_dynamics,
    classify_series,
    dominant_frequency,
    eom_rhs,
    first_minimum_time,
    integrate,
    steady_value,
    trajectory_difference,
)
from .oracle import FockSystem, FockTrajectory, build_hamiltonian, exact_deviation, exact_propagate
from .state import (
    InternalConsistencyError,
    ObservableRecord,
    VariationalState,
    bath_energy,
    entropy,
    init_state,
    observables,
    overlap_exponent,
    total_energy,
)

__version__ = "0.1.0"

__all__ = [
    "SpectralParams",
    "DiscreteBath",
    "spectral_density",
    "discretize_bath",
    "reorganization_energy",
    "VariationalState",
    "ObservableRecord",
    "InternalConsistencyError",
    "init_state",
    "overlap_exponent",
    "observables",
    "entropy",
    "total_energy",
    "bath_energy",
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
    "DeviationBreakdown",
    "deviation_breakdown",
    "deviation_norm_squared",
    "relative_deviation",
    "FockSystem",
    "FockTrajectory",
    "build_hamiltonian",
    "exact_propagate",
    "exact_deviation",
    "__version__",
]
