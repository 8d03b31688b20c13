"""Command-line interface.

Subcommands: validate, fare, horizon, run, bench, reproduce. Errors are
emitted as one JSON object on stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import RhpgKfError
from .harness import (
    ExperimentSpec,
    derive_seed,
    derive_seed_sequence,
    load_config,
    run_benchmark,
    stage_tolerance,
    write_records_csv,
)
from .rhpg import iteration_budget, rhpg_kf
from .riccati import horizon_bound, riccati_trace, solve_fare
from .sysmodel import spectral_radius, validate_system

PRESETS = {"scalar": "scalar.toml", "vector": "vector.toml"}


def preset_path(name: str) -> Path:
    try:
        resource = PRESETS[name]
    except KeyError:
        raise RhpgKfError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return Path(str(resources.files("rhpgkf.configs").joinpath(resource)))


def _print_matrix(name: str, mat: np.ndarray):
    arr = np.asarray(mat)
    if arr.size == 1:
        print(f"{name} = {float(arr.reshape(-1)[0]):.6f}")
    else:
        body = np.array2string(arr, precision=6, suppress_small=False)
        print(f"{name} =\n{body}")


def cmd_validate(args) -> int:
    spec = load_config(args.config, require_valid=False)
    report = validate_system(spec.system)
    if report.passed:
        try:
            report = validate_system(spec.system, solve_fare(spec.system))
        except RhpgKfError:
            pass  # steady-state solve failed; report the base checks alone
    for message in report.messages:
        print(message)
    print("result:", "pass" if report.passed else "fail")
    return 0 if report.passed else 1


def cmd_fare(args) -> int:
    spec = load_config(args.config)
    fare = solve_fare(spec.system, tol=args.tol, max_iter=args.max_iter)
    _print_matrix("sigma_star", fare.sigma_star)
    _print_matrix("gain_star", fare.gain_star)
    _print_matrix("a_closed", fare.a_closed)
    print(f"spectral_radius(a_closed) = {spectral_radius(fare.a_closed):.6f}")
    print(f"weighted_norm(a_closed) = {fare.induced_norm_acl:.6f}")
    print(f"iterations = {fare.iterations}")
    print(f"residual = {fare.residual:.3e}")
    return 0


def cmd_horizon(args) -> int:
    spec = load_config(args.config)
    fare = solve_fare(spec.system)
    print(horizon_bound(spec.system, fare, args.epsilon))
    return 0


def cmd_run(args) -> int:
    spec = load_config(args.config)
    epsilon = args.epsilon if args.epsilon is not None else spec.epsilons[0]
    base_seed = args.seed if args.seed is not None else spec.base_seed
    inner = spec.inner
    if args.mode is not None:
        inner = replace(inner, mode=args.mode)
    fare = solve_fare(spec.system)
    horizon = horizon_bound(spec.system, fare, epsilon)
    trace = riccati_trace(spec.system, horizon)
    if inner.target_tol is not None:
        tol = inner.target_tol
    else:
        a_ref, b_ref = trace.stage(spec.system, horizon - 1)
        gap = float(
            np.linalg.norm(
                np.hstack([a_ref, b_ref]) - np.hstack([fare.a_closed, fare.b_closed]), 2
            )
        )
        tol = stage_tolerance(epsilon, horizon, gap)
    max_iters = iteration_budget(tol, inner.batch) if spec.auto_budget else inner.max_iters
    cfg = replace(inner, target_tol=tol, max_iters=max_iters)
    seed = derive_seed(base_seed, epsilon, 0)
    rng = np.random.default_rng(derive_seed_sequence(base_seed, epsilon, 0))
    _, record = rhpg_kf(
        spec.system,
        horizon,
        cfg,
        rng,
        benchmark_refs=trace,
        fare=fare,
        epsilon=epsilon,
        seed=seed,
    )
    print(
        f"epsilon={epsilon:g} horizon={record.horizon} samples={record.total_samples} "
        f"final_error={record.final_policy_error:.6g} "
        f"spectral_radius={record.final_spectral_radius:.6g} "
        f"stabilizing={str(record.stabilizing).lower()}"
    )
    if args.out is not None:
        write_records_csv([record], args.out)
        print(f"wrote {args.out}")
    met = record.final_policy_error is not None and record.final_policy_error <= epsilon
    return 0 if met and record.stabilizing else 1


def cmd_bench(args) -> int:
    spec = load_config(args.config)
    records = run_benchmark(spec, record_trace=args.trace)
    out = Path(args.out)
    write_records_csv(records, out, write_traces=args.trace)
    failed = sum(1 for rec in records if rec.failure is not None)
    print(f"wrote {len(records)} records to {out} ({failed} failed trials)")
    return 0


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    updates = {}
    if args.trials is not None:
        updates["trials_per_epsilon"] = args.trials
    if args.epsilons:
        updates["epsilons"] = tuple(args.epsilons)
    if args.seed is not None:
        updates["base_seed"] = args.seed
    return replace(spec, **updates) if updates else spec


def cmd_reproduce(args) -> int:
    spec = load_config(preset_path(args.preset))
    spec = _apply_overrides(spec, args)
    records = run_benchmark(spec, record_trace=args.trace)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{args.preset}_records.csv"
    write_records_csv(records, csv_path, write_traces=args.trace)
    all_met = True
    for epsilon in spec.epsilons:
        group = [rec for rec in records if rec.epsilon == epsilon]
        met = sum(
            1
            for rec in group
            if rec.final_policy_error is not None
            and rec.final_policy_error <= epsilon
            and rec.stabilizing
        )
        samples = sorted(rec.total_samples for rec in group)
        median = samples[len(samples) // 2] if samples else 0
        print(
            f"epsilon={epsilon:g}: {met}/{len(group)} runs within target, "
            f"median samples={median}"
        )
        all_met = all_met and met == len(group)
    print(f"wrote {csv_path}")
    return 0 if all_met else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhpgkf",
        description=(
            "Learn steady-state Kalman filters from trajectory data with a "
            "receding-horizon policy-gradient method; includes exact Riccati "
            "reference solvers and benchmark sweeps."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the modelling assumptions of a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fare", help="solve for the steady-state filter")
    p.add_argument("--config", required=True)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=100_000, dest="max_iter")
    p.set_defaults(func=cmd_fare)

    p = sub.add_parser("horizon", help="print the horizon needed for a target accuracy")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(func=cmd_horizon)

    p = sub.add_parser("run", help="one learning run at a single accuracy")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["exact", "zo"], default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run the full sweep of a config and write CSV records")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", action="store_true", help="also write per-iteration trace files")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reproduce", help="run a bundled benchmark preset")
    p.add_argument("preset", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--epsilons", type=float, nargs="*", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RhpgKfError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
