"""Experiment orchestration: config ingestion, sweeps, and CSV persistence.

A sweep runs the learner for every (accuracy, trial) pair with
independently derived random streams, so removing one accuracy from the
grid leaves every other record unchanged. Trials may execute in
parallel (``RHPGKF_THREADS``); records are always emitted in canonical
(epsilon descending, seed ascending) order.
"""

from __future__ import annotations

import concurrent.futures
import csv
import os
import sys as _sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if _sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .errors import ConfigError
from .errors import ConvergenceError, DivergenceError
from .rhpg import InnerSolverConfig, RunRecord, iteration_budget, rhpg_kf
from .riccati import horizon_bound, riccati_trace, solve_fare
from .sysmodel import LtiSystem, validate_system

CSV_HEADER = (
    "epsilon",
    "seed",
    "horizon",
    "total_samples",
    "final_error",
    "spectral_radius",
    "stabilizing",
    "wall_time_ms",
)
TRACE_HEADER = ("stage", "iter", "cum_samples", "subproblem_error")


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated sweep description: system, accuracy grid, solver settings."""

    system: LtiSystem
    epsilons: tuple[float, ...]
    trials_per_epsilon: int
    inner: InnerSolverConfig
    base_seed: int
    output_path: Path | None = None
    auto_budget: bool = field(default=True, compare=False)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ConfigError("epsilons must be a non-empty list")
        if any(e <= 0 for e in eps):
            raise ConfigError("epsilons must be strictly positive")
        if len(set(eps)) != len(eps):
            raise ConfigError("epsilons must be distinct")
        object.__setattr__(self, "epsilons", tuple(sorted(eps, reverse=True)))
        if self.trials_per_epsilon < 1:
            raise ConfigError("trials_per_epsilon must be at least 1")


def derive_seed_sequence(base_seed: int, epsilon: float, trial: int) -> np.random.SeedSequence:
    """Independent stream per (epsilon value, trial), split off the base seed."""
    eps_bits = int(np.float64(epsilon).view(np.uint64))
    return np.random.SeedSequence(entropy=(int(base_seed), eps_bits, int(trial)))


def derive_seed(base_seed: int, epsilon: float, trial: int) -> int:
    return int(derive_seed_sequence(base_seed, epsilon, trial).generate_state(1, np.uint64)[0])


def _system_from_table(table: dict) -> LtiSystem:
    required = ("a", "c", "w", "v", "x0_mean", "x0_cov")
    missing = [key for key in required if key not in table]
    if missing:
        raise ConfigError(f"[system] table is missing {', '.join(missing)}")
    try:
        return LtiSystem(
            a=table["a"],
            c=table["c"],
            w=table["w"],
            v=table["v"],
            x0_mean=table["x0_mean"],
            x0_cov=table["x0_cov"],
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [system] table: {exc}") from exc


def load_config(path, require_valid: bool = True) -> ExperimentSpec:
    """Parse a TOML experiment file into a validated ExperimentSpec.

    Matrices are row-major nested arrays. Missing optional [run] keys
    take the documented defaults; an absent max_iters enables the
    per-run automatic iteration budget.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc

    if "system" not in raw:
        raise ConfigError("config needs a [system] table")
    system = _system_from_table(raw["system"])

    report = validate_system(system)
    if require_valid and not report.passed:
        detail = "; ".join(msg for msg in report.messages)
        err = ConfigError(f"system validation failed: {detail}")
        err.report = report
        raise err

    run = raw.get("run", {})
    inner = InnerSolverConfig(
        mode=run.get("mode", "zeroth_order"),
        eta0=float(run.get("eta0", 1.0)),
        r0=float(run.get("r0", 1.0)),
        max_iters=int(run.get("max_iters", 100_000)),
        target_tol=float(run["target_tol"]) if "target_tol" in run else None,
        batch=int(run.get("batch", 1)),
        divergence_bound=float(run.get("divergence_bound", 1e6)),
    )
    if "epsilons" not in run:
        raise ConfigError("[run] table needs an epsilons list")
    out = run.get("output_path")
    return ExperimentSpec(
        system=system,
        epsilons=tuple(run["epsilons"]),
        trials_per_epsilon=int(run.get("trials_per_epsilon", 10)),
        inner=inner,
        base_seed=int(run.get("base_seed", 0)),
        output_path=Path(out) if out is not None else None,
        auto_budget="max_iters" not in run,
    )


def _failed_record(epsilon: float, horizon: int, seed: int, reason: str) -> RunRecord:
    return RunRecord(
        epsilon=epsilon,
        horizon=horizon,
        seed=seed,
        per_stage=(),
        total_samples=0,
        final_policy_error=float("inf"),
        final_spectral_radius=float("inf"),
        stabilizing=False,
        wall_time_ms=0.0,
        failure=reason,
    )


def stage_tolerance(epsilon: float, horizon: int, truncation_gap: float) -> float:
    """Per-stage tolerance: the accuracy budget left after the horizon-truncation
    gap, split uniformly across stages (floored at a quarter share)."""
    return max((epsilon - truncation_gap) / horizon, epsilon / (4.0 * horizon))


def _run_trial(args) -> RunRecord:
    spec, epsilon, trial, horizon, fare, trace, record_trace = args
    if spec.inner.target_tol is not None:
        tol = spec.inner.target_tol
    else:
        a_ref, b_ref = trace.stage(spec.system, horizon - 1)
        gap = float(
            np.linalg.norm(
                np.hstack([a_ref, b_ref]) - np.hstack([fare.a_closed, fare.b_closed]), 2
            )
        )
        tol = stage_tolerance(epsilon, horizon, gap)
    max_iters = spec.inner.max_iters
    if spec.auto_budget:
        max_iters = iteration_budget(tol, spec.inner.batch)
    cfg = replace(spec.inner, target_tol=tol, max_iters=max_iters)
    seed = derive_seed(spec.base_seed, epsilon, trial)
    rng = np.random.default_rng(derive_seed_sequence(spec.base_seed, epsilon, trial))
    try:
        _, record = rhpg_kf(
            spec.system,
            horizon,
            cfg,
            rng,
            benchmark_refs=trace,
            fare=fare,
            epsilon=epsilon,
            seed=seed,
            record_trace=record_trace,
        )
        return record
    except (DivergenceError, ConvergenceError) as exc:
        return _failed_record(epsilon, horizon, seed, f"{type(exc).__name__}: {exc}")


def _worker_count() -> int:
    raw = os.environ.get("RHPGKF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_benchmark(spec: ExperimentSpec, record_trace: bool = False) -> list[RunRecord]:
    """Run every (epsilon, trial) pair of the sweep; deterministic given base_seed.

    The horizon comes from the horizon bound at each accuracy and the
    per-stage tolerance is the uniform split epsilon / horizon (unless
    the config pins an explicit target_tol). Individual trial failures
    are recorded, not raised.
    """
    fare = solve_fare(spec.system)
    tasks = []
    for epsilon in spec.epsilons:
        horizon = horizon_bound(spec.system, fare, epsilon)
        trace = riccati_trace(spec.system, horizon)
        for trial in range(spec.trials_per_epsilon):
            tasks.append((spec, epsilon, trial, horizon, fare, trace, record_trace))

    workers = _worker_count()
    if workers == 1 or len(tasks) == 1:
        records = [_run_trial(task) for task in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_trial, tasks))
    records.sort(key=lambda rec: (-rec.epsilon, rec.seed))
    return records


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_records_csv(records, path, write_traces: bool = False) -> Path:
    """Write one row per record, sorted by (epsilon desc, seed).

    Floats carry at least 9 significant digits. When ``write_traces`` is
    set, each record with a stored per-iteration trace gets a companion
    file ``<stem>_trace_<idx>.csv``.
    """
    path = Path(path)
    ordered = sorted(records, key=lambda rec: (-(rec.epsilon or 0.0), rec.seed or 0))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for rec in ordered:
                writer.writerow(
                    [
                        _fmt(float(rec.epsilon if rec.epsilon is not None else float("nan"))),
                        _fmt(rec.seed if rec.seed is not None else 0),
                        _fmt(rec.horizon),
                        _fmt(rec.total_samples),
                        _fmt(float(rec.final_policy_error if rec.final_policy_error is not None else float("nan"))),
                        _fmt(float(rec.final_spectral_radius)),
                        _fmt(bool(rec.stabilizing)),
                        _fmt(float(rec.wall_time_ms)),
                    ]
                )
        if write_traces:
            for idx, rec in enumerate(ordered):
                if not rec.traces:
                    continue
                trace_path = path.with_name(f"{path.stem}_trace_{idx:03d}.csv")
                with open(trace_path, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(TRACE_HEADER)
                    for stage_idx, stage_trace in rec.traces:
                        for it, cum_samples, err in stage_trace:
                            writer.writerow([stage_idx, it, cum_samples, _fmt(float(err))])
    except OSError as exc:
        raise ConfigError(f"could not write records to {path}: {exc}") from exc
    return path


def read_records_csv(path) -> list[dict]:
    """Parse a records CSV back into typed dictionaries."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [col for col in CSV_HEADER if col not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"records CSV is missing columns: {', '.join(missing)}")
        for row in reader:
            rows.append(
                {
                    "epsilon": float(row["epsilon"]),
                    "seed": int(row["seed"]),
                    "horizon": int(row["horizon"]),
                    "total_samples": int(row["total_samples"]),
                    "final_error": float(row["final_error"]),
                    "spectral_radius": float(row["spectral_radius"]),
                    "stabilizing": row["stabilizing"] == "true",
                    "wall_time_ms": float(row["wall_time_ms"]),
                }
            )
    return rows
