"""Command-line driver: single runs, parameter sweeps, initial-condition
comparisons and the small-bath exact cross-check.

All physical quantities are expressed in units of the cutoff frequency
(omega_c = 1 fixes the global energy/time unit).  Run configurations come from
a flat ``key = value`` text file, command-line flags, or both (flags win).
Trajectories are written as comma-separated tables with a '#'-prefixed
metadata header and at least 15 significant digits per value, plus a JSON
metadata sidecar that records everything needed to reproduce the run
(the sidecar also holds the wall time, which is why the bit-identical
determinism contract covers the table, not the sidecar).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import __version__
from .bath import DiscreteBath, SpectralParams, discretize_bath, reorganization_energy
from .dynamics import (
    IntegratorConfig,
    NormDriftError,
    Trajectory,
    classify_series,
    eom_rhs,
    integrate,
    steady_value,
    trajectory_difference,
)
from .deviation import deviation_norm_squared, residual_norm_squared_on_shell
from .oracle import build_hamiltonian, exact_deviation, exact_propagate
from .state import InternalConsistencyError, init_state

__all__ = [
    "RunConfig",
    "ConfigError",
    "run",
    "sweep",
    "compare_initial_conditions",
    "oracle_check",
    "write_table",
    "read_table",
    "main",
]

SCHEMA_VERSION = 1
TABLE_COLUMNS = ("t", "p_z", "p_x", "p_y", "entropy", "sigma", "e_total", "e_bath", "norm")
SUMMARY_COLUMNS = ("value", "status", "classification", "steady_p_z", "steady_entropy", "sigma_saturation")
MAX_WORKERS_ENV = "SUBOHMIC_MAX_WORKERS"
PAPER_SCALE_N_MODES = 20000

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Invalid run configuration or output collision."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a single trajectory run needs, in omega_c units."""

    s: float = 0.25
    alpha: float = 0.1
    delta: float = 0.1
    n_modes: int = 2000
    omega_max: float = 4.0
    initial_condition: str = "factorized"
    dt: float = 0.01
    t_max: float = 40.0
    record_every: int = 10
    epsilon_amp: float = 1e-8
    norm_drift_tol: float = 1e-4
    compute_sigma: bool = False
    sigma_average: str = "full"

    def validate(self) -> None:
        try:
            self.spectral_params()
            self.integrator_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.initial_condition not in ("factorized", "polarized"):
            raise ConfigError(f"unknown initial condition {self.initial_condition!r}")
        if self.n_modes < 1:
            raise ConfigError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.sigma_average not in ("full", "running"):
            raise ConfigError(f"unknown sigma averaging mode {self.sigma_average!r}")
        recurrence = 2.0 * math.pi * self.n_modes / self.omega_max
        if self.t_max >= recurrence:
            raise ConfigError(
                f"t_max = {self.t_max:g} is not below the recurrence time"
                f" T_p = {recurrence:g} of an n_modes = {self.n_modes} bath"
            )
        if self.dt * self.omega_max >= 0.5:
            raise ConfigError(
                f"dt = {self.dt} cannot resolve omega_max = {self.omega_max}"
            )

    def spectral_params(self) -> SpectralParams:
        return SpectralParams(s=self.s, alpha=self.alpha, omega_c=1.0)

    def bath(self) -> DiscreteBath:
        return discretize_bath(self.spectral_params(), self.n_modes, self.omega_max)

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(
            dt=self.dt,
            t_max=self.t_max,
            record_every=self.record_every,
            epsilon_amp=self.epsilon_amp,
            norm_drift_tol=self.norm_drift_tol,
        )


# ---------------------------------------------------------------------------
# table and sidecar i/o

def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(
    path: str,
    columns: dict[str, np.ndarray],
    metadata: dict,
    force: bool = False,
) -> None:
    """Write a '#'-headed CSV table with >= 15 significant digits per value."""
    if os.path.exists(path) and not force:
        raise ConfigError(f"output {path!r} exists; pass --force to overwrite")
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    n = arrays[0].size
    lines = [f"# subohmic table schema {SCHEMA_VERSION}"]
    for key, value in metadata.items():
        lines.append(f"# {key} = {_format_value(value)}")
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(f"{col[i]:.15e}" for col in arrays))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table(path: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a table written by write_table; returns (columns, header metadata)."""
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                continue
            rows.append([float(x) for x in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no column header found")
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}, meta


def _sidecar_path(path: str) -> str:
    return path + ".meta.json"


def _run_metadata(config: RunConfig, bath: DiscreteBath) -> dict:
    params = config.spectral_params()
    return {
        "schema_version": SCHEMA_VERSION,
        "engine_version": __version__,
        **asdict(config),
        "delta_omega": bath.delta_omega,
        "recurrence_time": bath.recurrence_time,
        "reorganization_energy_continuum": reorganization_energy(params),
        "reorganization_energy_within_omega_max": reorganization_energy(params, config.omega_max),
        "reorganization_energy_discrete": bath.discrete_reorganization_energy(),
    }


def _write_sidecar(path: str, metadata: dict, force: bool) -> None:
    sidecar = _sidecar_path(path)
    if os.path.exists(sidecar) and not force:
        raise ConfigError(f"output {sidecar!r} exists; pass --force to overwrite")
    with open(sidecar, "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# operations

def run(config: RunConfig, output: str, force: bool = False) -> Trajectory:
    """Execute one trajectory and write the table plus its metadata sidecar."""
    config.validate()
    if os.path.exists(output) and not force:
        raise ConfigError(f"output {output!r} exists; pass --force to overwrite")
    bath = config.bath()
    initial = init_state(config.initial_condition, bath)
    started = time.perf_counter()
    trajectory = integrate(
        initial,
        bath,
        config.delta,
        config.integrator_config(),
        compute_sigma=config.compute_sigma,
        sigma_average=config.sigma_average,
    )
    wall = time.perf_counter() - started
    metadata = _run_metadata(config, bath)
    write_table(output, trajectory.columns(), metadata, force=force)
    metadata_out = dict(metadata)
    metadata_out.update(
        {
            "regularization_events": trajectory.regularization_events,
            "first_regularization_time": trajectory.first_regularization_time,
            "sigma_defined": trajectory.sigma_defined,
            "e_bath_average": trajectory.e_bath_average,
            "wall_time_s": wall,
        }
    )
    _write_sidecar(output, metadata_out, force)
    return trajectory


def _summarize(value: float, config: RunConfig, trajectory: Trajectory) -> dict:
    try:
        classification = classify_series(trajectory.t, trajectory.p_z, config.delta)
    except ValueError:
        classification = "n/a"
    sigma_sat = (
        steady_value(trajectory.t, trajectory.sigma)
        if trajectory.sigma_enabled and trajectory.sigma_defined
        else math.nan
    )
    return {
        "value": value,
        "status": "ok",
        "classification": classification,
        "steady_p_z": steady_value(trajectory.t, trajectory.p_z),
        "steady_entropy": steady_value(trajectory.t, trajectory.entropy),
        "sigma_saturation": sigma_sat,
    }


def _sweep_point(args: tuple) -> dict:
    config, parameter, value, path, force = args
    try:
        trajectory = run(config, path, force=force)
    except (NormDriftError, InternalConsistencyError) as exc:
        return {
            "value": value,
            "status": f"failed: {exc}",
            "classification": "n/a",
            "steady_p_z": math.nan,
            "steady_entropy": math.nan,
            "sigma_saturation": math.nan,
        }
    return _summarize(value, config, trajectory)


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get(MAX_WORKERS_ENV)
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_tasks, limit))


def sweep(
    base: RunConfig,
    parameter: str,
    values: list[float],
    output_dir: str,
    force: bool = False,
) -> list[dict]:
    """Run one trajectory per parameter value and write a summary table.

    Individual run failures are recorded in the summary; remaining points
    still execute.  Points run concurrently when more than one worker is
    available (cap with the SUBOHMIC_MAX_WORKERS environment variable).
    """
    if parameter not in ("alpha", "s", "delta"):
        raise ConfigError(f"sweep parameter must be alpha, s or delta, got {parameter!r}")
    os.makedirs(output_dir, exist_ok=True)
    tasks = []
    for value in values:
        config = replace(base, **{parameter: value})
        config.validate()
        path = os.path.join(output_dir, f"{parameter}_{value:g}.csv")
        tasks.append((config, parameter, value, path, force))

    summary_path = os.path.join(output_dir, "sweep_summary.csv")
    if os.path.exists(summary_path) and not force:
        raise ConfigError(f"output {summary_path!r} exists; pass --force to overwrite")

    workers = _worker_count(len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(task) for task in tasks]

    lines = [
        f"# subohmic sweep summary schema {SCHEMA_VERSION}",
        f"# parameter = {parameter}",
        ",".join(SUMMARY_COLUMNS),
    ]
    for row in results:
        lines.append(
            ",".join(
                [
                    f"{row['value']:.15e}",
                    row["status"].replace(",", ";"),
                    row["classification"],
                    f"{row['steady_p_z']:.15e}",
                    f"{row['steady_entropy']:.15e}",
                    f"{row['sigma_saturation']:.15e}",
                ]
            )
        )
    with open(summary_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return results


def compare_initial_conditions(
    config_factorized: RunConfig,
    config_polarized: RunConfig,
    output: str,
    force: bool = False,
) -> dict:
    """Run a factorized/polarized pair and write the aligned P_z table.

    The two configurations must be identical except for the initial
    condition.  Returns the difference metrics (max and time-integrated
    |P_z difference|).
    """
    if config_factorized.initial_condition != "factorized":
        raise ConfigError("first config must use the factorized initial condition")
    if config_polarized.initial_condition != "polarized":
        raise ConfigError("second config must use the polarized initial condition")
    if replace(config_factorized, initial_condition="polarized") != config_polarized:
        raise ConfigError("configs differ in more than the initial condition")
    config_factorized.validate()
    config_polarized.validate()
    if os.path.exists(output) and not force:
        raise ConfigError(f"output {output!r} exists; pass --force to overwrite")

    bath = config_factorized.bath()
    results = {}
    for config in (config_factorized, config_polarized):
        initial = init_state(config.initial_condition, bath)
        results[config.initial_condition] = integrate(
            initial,
            bath,
            config.delta,
            config.integrator_config(),
            compute_sigma=config.compute_sigma,
        )
    fac = results["factorized"]
    pol = results["polarized"]
    metrics = trajectory_difference(fac.t, fac.p_z, pol.p_z)
    metadata = _run_metadata(config_factorized, bath)
    metadata["initial_condition"] = "both"
    metadata.update({f"p_z_{k}": v for k, v in metrics.items()})
    write_table(
        output,
        {"t": fac.t, "p_z_factorized": fac.p_z, "p_z_polarized": pol.p_z},
        metadata,
        force=force,
    )
    _write_sidecar(output, metadata, force)
    return metrics


def oracle_check(
    s: float = 0.25,
    alpha: float = 0.2,
    delta: float = 0.2,
    n_modes: int = 3,
    omega_max: float = 3.0,
    n_max: int = 24,
    t_max: float = 5.0,
    dt: float = 0.002,
    sample_every: int = 250,
    pz_tol: float = 1e-2,
    deviation_tol: float = 1e-6,
    quiet: bool = False,
) -> dict:
    """Compare the variational engine against exact Fock-space propagation.

    Runs both on a small weak-coupling bath, reports the worst P_z deviation
    and the worst relative mismatch of the closed-form residual norm against
    the oracle's direct evaluation on sampled trajectory states.
    """
    params = SpectralParams(s=s, alpha=alpha, omega_c=1.0)
    bath = discretize_bath(params, n_modes=n_modes, omega_max=omega_max)
    ratio = float(np.max(bath.coupling / (2.0 * bath.omega)))
    system = build_hamiltonian(bath, n_max=n_max, delta=delta)

    states = []

    def keep(record, state):
        states.append(state.copy())

    config = IntegratorConfig(dt=dt, t_max=t_max, record_every=sample_every)
    trajectory = integrate(
        init_state("factorized", bath), bath, delta, config, on_record=keep
    )
    exact = exact_propagate(system, "factorized", dt=dt * sample_every, t_max=t_max)
    pz_dev = float(np.max(np.abs(trajectory.p_z - np.interp(trajectory.t, exact.t, exact.p_z))))

    worst_rel = 0.0
    for state in states:
        derivative = eom_rhs(state, bath, delta)
        closed = deviation_norm_squared(state, derivative, bath, delta)
        on_shell = residual_norm_squared_on_shell(state, bath, delta)
        brute = exact_deviation(system, state, derivative)
        scale = max(brute, 1e-300)
        worst_rel = max(worst_rel, abs(closed - brute) / scale, abs(on_shell - brute) / scale)

    ok = pz_dev < pz_tol and worst_rel < deviation_tol
    if not quiet:
        print(f"max |lambda/(2 omega)| = {ratio:.4f}")
        print(f"max |P_z(variational) - P_z(exact)| = {pz_dev:.3e} (tol {pz_tol:g})")
        print(
            f"worst relative residual-norm mismatch over {len(states)} states"
            f" = {worst_rel:.3e} (tol {deviation_tol:g})"
        )
        print("oracle check:", "PASS" if ok else "FAIL")
    return {
        "coupling_ratio": ratio,
        "max_pz_deviation": pz_dev,
        "worst_residual_rel_error": worst_rel,
        "ok": ok,
    }


# ---------------------------------------------------------------------------
# argument parsing

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_config_file(path: str) -> dict[str, str]:
    """Parse a flat ``key = value`` configuration file ('#' comments)."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _build_config(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
        field_types = {f.name: f.type for f in fields(RunConfig)}
        for key, raw in file_values.items():
            if key not in field_types:
                raise ConfigError(f"unknown configuration key {key!r}")
            kind = field_types[key]
            if kind in ("bool", bool):
                merged[key] = _parse_bool(raw)
            elif kind in ("int", int):
                merged[key] = int(raw)
            elif kind in ("float", float):
                merged[key] = float(raw)
            else:
                merged[key] = raw
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            merged[f.name] = flag
    if getattr(args, "paper_scale", False):
        merged["n_modes"] = PAPER_SCALE_N_MODES
    config = RunConfig(**merged)
    config.validate()
    return config


def _add_config_flags(parser: argparse.ArgumentParser, with_initial: bool = True) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--s", type=float, help="spectral exponent")
    parser.add_argument("--alpha", type=float, help="coupling strength")
    parser.add_argument("--delta", type=float, help="tunneling amplitude (units of omega_c)")
    parser.add_argument("--n-modes", dest="n_modes", type=int, help="number of bath modes")
    parser.add_argument("--omega-max", dest="omega_max", type=float, help="frequency truncation")
    if with_initial:
        parser.add_argument(
            "--initial-condition",
            dest="initial_condition",
            choices=("factorized", "polarized"),
        )
    parser.add_argument("--dt", type=float, help="integrator step (units of 1/omega_c)")
    parser.add_argument("--t-max", dest="t_max", type=float, help="final time")
    parser.add_argument("--record-every", dest="record_every", type=int)
    parser.add_argument("--epsilon-amp", dest="epsilon_amp", type=float)
    parser.add_argument("--norm-drift-tol", dest="norm_drift_tol", type=float)
    parser.add_argument(
        "--sigma",
        dest="compute_sigma",
        action="store_const",
        const=True,
        help="compute the relative deviation sigma(t) (roughly doubles per-record cost)",
    )
    parser.add_argument("--sigma-average", dest="sigma_average", choices=("full", "running"))
    parser.add_argument(
        "--paper-scale",
        action="store_true",
        help=f"use the production bath size n_modes = {PAPER_SCALE_N_MODES}",
    )


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subohmic",
        description="Sub-Ohmic spin-boson variational dynamics engine",
    )
    parser.add_argument("--version", action="version", version=f"subohmic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single trajectory")
    _add_config_flags(p_run)
    p_run.add_argument("--output", required=True, help="trajectory table path")
    p_run.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p_sweep = sub.add_parser("sweep", help="run a family of trajectories")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--parameter", required=True, choices=("alpha", "s", "delta"))
    p_sweep.add_argument(
        "--values", required=True, help="comma-separated list of parameter values"
    )
    p_sweep.add_argument("--output-dir", required=True)
    p_sweep.add_argument("--force", action="store_true")

    p_cmp = sub.add_parser(
        "compare", help="factorized vs polarized runs at otherwise equal settings"
    )
    _add_config_flags(p_cmp, with_initial=False)
    p_cmp.add_argument("--output", required=True)
    p_cmp.add_argument("--force", action="store_true")

    p_oracle = sub.add_parser(
        "oracle-check", help="validate the engine against exact Fock-space propagation"
    )
    p_oracle.add_argument("--s", type=float, default=0.25)
    p_oracle.add_argument("--alpha", type=float, default=0.2)
    p_oracle.add_argument("--delta", type=float, default=0.2)
    p_oracle.add_argument("--n-modes", dest="n_modes", type=int, default=3)
    p_oracle.add_argument("--omega-max", dest="omega_max", type=float, default=3.0)
    p_oracle.add_argument("--n-max", dest="n_max", type=int, default=24)
    p_oracle.add_argument("--t-max", dest="t_max", type=float, default=5.0)
    p_oracle.add_argument("--dt", type=float, default=0.002)
    p_oracle.add_argument("--pz-tol", dest="pz_tol", type=float, default=1e-2)
    p_oracle.add_argument("--deviation-tol", dest="deviation_tol", type=float, default=1e-6)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = _build_config(args)
            trajectory = run(config, args.output, force=args.force)
            print(
                f"wrote {args.output} ({trajectory.t.size} records,"
                f" {trajectory.regularization_events} regularization events)"
            )
        elif args.command == "sweep":
            config = _build_config(args)
            values = [float(v) for v in args.values.split(",") if v.strip()]
            results = sweep(config, args.parameter, values, args.output_dir, force=args.force)
            failed = [r for r in results if r["status"] != "ok"]
            print(
                f"wrote {len(results)} run(s) to {args.output_dir}"
                + (f"; {len(failed)} failed" if failed else "")
            )
        elif args.command == "compare":
            base = _build_config(args)
            fac = replace(base, initial_condition="factorized")
            pol = replace(base, initial_condition="polarized")
            metrics = compare_initial_conditions(fac, pol, args.output, force=args.force)
            print(
                f"wrote {args.output}; max |dP_z| = {metrics['max_abs_diff']:.6g},"
                f" integrated |dP_z| = {metrics['integrated_abs_diff']:.6g}"
            )
        elif args.command == "oracle-check":
            result = oracle_check(
                s=args.s,
                alpha=args.alpha,
                delta=args.delta,
                n_modes=args.n_modes,
                omega_max=args.omega_max,
                n_max=args.n_max,
                t_max=args.t_max,
                dt=args.dt,
                pz_tol=args.pz_tol,
                deviation_tol=args.deviation_tol,
            )
            if not result["ok"]:
                return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NormDriftError, InternalConsistencyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
