"""Receding-horizon policy-gradient learner.

The driver solves one-step quadratic subproblems forward in time,
freezing each learned stage into the simulation prefix of the next. Two
inner solvers are provided: deterministic gradient descent on the exact
moment-based objective, and a stochastic solver fed by the two-point
zeroth-order oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, DivergenceError, PreconditionError
from .riccati import FareSolution, RiccatiTrace
from .simkit import (
    FilterSequence,
    FilterStage,
    MomentSet,
    _least_squares_optimum,
    _zo_gradient_batch,
    propagate_moments,
)
from .sysmodel import LtiSystem, spectral_radius

MODE_EXACT = "exact"
MODE_ZO = "zeroth_order"
_MODE_ALIASES = {"exact": MODE_EXACT, "zo": MODE_ZO, "zeroth_order": MODE_ZO}

# Model-free iteration budget: ceil(K * tol^-2 * log(1/delta) / batch),
# calibrated on the scalar benchmark so tolerance-stopped runs never hit it.
BUDGET_K = 50.0
BUDGET_DELTA = 0.1
BUDGET_FLOOR = 200_000


def canonical_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise PreconditionError(f"unknown solver mode {mode!r}") from None


@dataclass(frozen=True)
class InnerSolverConfig:
    """Settings for one inner subproblem solve.

    ``target_tol`` enables benchmark mode: the solver tracks the known
    stage optimum and stops once within tolerance. Without it the
    zeroth-order solver runs exactly ``max_iters`` iterations.
    """

    mode: str = MODE_ZO
    eta0: float = 1.0
    r0: float = 1.0
    max_iters: int = 100_000
    target_tol: float | None = None
    batch: int = 1
    divergence_bound: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        if self.eta0 <= 0 or self.r0 <= 0:
            raise PreconditionError("eta0 and r0 must be positive")
        if self.max_iters < 1:
            raise PreconditionError("max_iters must be at least 1")
        if self.target_tol is not None and self.target_tol <= 0:
            raise PreconditionError("target_tol must be positive when given")
        if self.batch < 1:
            raise PreconditionError("batch must be at least 1")
        if self.divergence_bound <= 0:
            raise PreconditionError("divergence_bound must be positive")


class InnerSolveResult(NamedTuple):
    stage: FilterStage
    iterations: int
    samples: int
    final_error: float | None = None
    trace: tuple = ()


class StageRecord(NamedTuple):
    stage_index: int
    iterations: int
    samples: int
    final_subproblem_error: float | None = None
    dp_gap: float | None = None


class PolicyEvaluation(NamedTuple):
    error: float
    stabilizing: bool
    within_margin: bool


@dataclass(frozen=True)
class RunRecord:
    """One learning run: configuration echo, per-stage trace, and final policy quality."""

    epsilon: float | None
    horizon: int
    seed: int | None
    per_stage: tuple[StageRecord, ...]
    total_samples: int
    final_policy_error: float | None
    final_spectral_radius: float
    stabilizing: bool
    wall_time_ms: float
    failure: str | None = None
    traces: tuple = field(default=(), repr=False)


def iteration_budget(tol: float, batch: int = 1, k: float = BUDGET_K, delta: float = BUDGET_DELTA) -> int:
    """Fixed iteration budget for tolerance ``tol`` in model-free mode."""
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    return max(BUDGET_FLOOR, math.ceil(k * tol**-2 * math.log(1.0 / delta) / batch))


def pg_step(theta: FilterStage, g: np.ndarray, eta: float) -> FilterStage:
    """One gradient step Theta' = Theta - eta * g, split back into (A_L, B_L)."""
    if eta <= 0:
        raise PreconditionError("stepsize eta must be positive")
    block = theta.theta
    g = np.asarray(g, dtype=float)
    if g.shape != block.shape:
        raise PreconditionError(f"gradient shape {g.shape} does not match theta {block.shape}")
    n = theta.a_l.shape[0]
    updated = block - eta * g
    return FilterStage(a_l=updated[:, :n], b_l=updated[:, n:])


def _spectral(block: np.ndarray) -> float:
    return float(np.linalg.norm(block, 2))


def solve_subproblem_exact(
    mom: MomentSet,
    cfg: InnerSolverConfig,
    theta0: FilterStage | None = None,
) -> InnerSolveResult:
    """Constant-stepsize gradient descent on the exact stage objective.

    Starts from the zero block (or ``theta0``), uses eta = min(eta0, 1/psi)
    with psi twice the largest eigenvalue of the regressor second moment,
    and stops at the first iterate within ``target_tol`` of the stage
    optimum. The iterates of this linear recursion are evaluated in the
    eigenbasis of the moment matrix, which reproduces the step-by-step
    update exactly while keeping long runs cheap.
    """
    if cfg.mode != MODE_EXACT:
        raise PreconditionError("solve_subproblem_exact requires an exact-mode config")
    if cfg.target_tol is None:
        raise PreconditionError("exact mode needs target_tol")
    m_mat = mom.regressor_second_moment
    n = mom.cross_moment.shape[0]
    cols = m_mat.shape[0]
    lam, q = np.linalg.eigh(m_mat)
    psi = 2.0 * float(lam[-1])
    eta = min(cfg.eta0, 1.0 / psi) if psi > 0 else cfg.eta0
    theta_star = _least_squares_optimum(mom)
    start = theta0.theta if theta0 is not None else np.zeros((n, cols))
    err0 = start - theta_star
    err0_q = err0 @ q
    rho = 1.0 - 2.0 * eta * np.clip(lam, 0.0, None)

    def error_at(i: int) -> float:
        return _spectral((err0_q * rho**i) @ q.T)

    tol = cfg.target_tol
    if error_at(0) <= tol:
        return InnerSolveResult(
            stage=FilterStage(a_l=start[:, :n], b_l=start[:, n:]),
            iterations=0,
            samples=0,
            final_error=error_at(0),
        )
    hi = 1
    lo = 0
    while error_at(hi) > tol:
        lo = hi
        hi *= 2
        if lo >= cfg.max_iters:
            last = error_at(cfg.max_iters)
            if last > tol:
                raise ConvergenceError(
                    f"exact subproblem solve did not reach {tol:.3e} within "
                    f"{cfg.max_iters} iterations (error {last:.3e})",
                    last_error=last,
                )
            hi = cfg.max_iters
            break
    hi = min(hi, cfg.max_iters)
    # ||error(i)|| is nonincreasing (all contraction factors lie in [0, 1]),
    # so bisect for the first iterate within tolerance.
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if error_at(mid) <= tol:
            hi = mid
        else:
            lo = mid
    iters = hi
    final_block = theta_star + (err0_q * rho**iters) @ q.T
    return InnerSolveResult(
        stage=FilterStage(a_l=final_block[:, :n], b_l=final_block[:, n:]),
        iterations=iters,
        samples=0,
        final_error=error_at(iters),
    )


def _zo_schedule(mom: MomentSet, cfg: InnerSolverConfig, ref: np.ndarray):
    """Per-stage stepsize constants for the stochastic solver.

    The warmup stepsize is 1/psi (psi twice the largest regressor-moment
    eigenvalue) and decays as O(1/i) on the smallest positive curvature,
    the standard robust schedule for strongly convex stochastic descent.
    When the regressor moment has an exact null space (a deterministic
    regressor component), gradient noise injected there never decays, so
    the warmup is additionally capped to keep the accumulated null-space
    noise inside the tolerance budget. All quantities come from the exact
    moments, which benchmark mode has access to anyway for its stopping
    rule.
    """
    m_mat = mom.regressor_second_moment
    lam = np.linalg.eigvalsh(m_mat)
    lam_max = float(lam[-1])
    null_cut = 1e-9 * max(lam_max, 1.0)
    positive = lam[lam > null_cut]
    n_null_dirs = int(np.sum(lam <= null_cut))
    lam_plus = float(positive[0]) if positive.size else max(lam_max, 1e-12)
    n_rows = ref.shape[0]
    ref_sq = float(np.sum(ref**2))
    lam_drive = lam_plus
    if ref_sq > 0:
        lam_drive = max(lam_plus, float(np.trace(ref @ m_mat @ ref.T)) / ref_sq)
    eta_stab = 1.0 / (2.0 * lam_max) if lam_max > 0 else 1.0
    eta_start = cfg.eta0 * eta_stab
    if n_null_dirs > 0:
        # Per-dimension gradient-noise scales far from and near the optimum:
        # the sphere estimator has E||g||_F^2 = 4 n(n+m) E[||e||^2 ||s||^2],
        # i.e. 4 E[||e||^2 ||s||^2] per parameter dimension.
        trace_m = float(np.trace(m_mat))
        j_far = max(mom.offset_final, 1e-12)
        j_near = max(mom.offset_final - float(np.trace(ref @ mom.cross_moment.T)), 1e-12)
        g2_far_dim = 6.0 * j_far * trace_m
        g2_near_dim = 6.0 * j_near * trace_m
        null_dims = n_null_dirs * n_rows
        denom = null_dims * (
            g2_far_dim / (4.0 * lam_drive) + g2_near_dim / (2.0 * lam_plus)
        )
        tol = cfg.target_tol
        eta_cap = cfg.batch * (tol / 2.0) ** 2 / denom
        eta_start = cfg.eta0 * min(eta_stab, eta_cap)
    return eta_start, lam_plus


def solve_subproblem_zo(
    sys: LtiSystem,
    prefix: FilterSequence,
    cfg: InnerSolverConfig,
    rng: np.random.Generator,
    record_trace: bool = False,
) -> InnerSolveResult:
    """Stochastic solve of the stage subproblem with the two-point oracle.

    Starts at the zero block. Iteration i averages ``batch`` oracle calls
    at radius r0 sqrt(target_tol)/i and steps with an O(1/i)-decaying
    stepsize. In benchmark mode (``target_tol`` set) the iteration stops
    once the iterate is within tolerance of the known stage optimum;
    otherwise it runs exactly ``max_iters`` iterations. Samples are
    2 * batch * iterations.
    """
    if cfg.mode != MODE_ZO:
        raise PreconditionError("solve_subproblem_zo requires a zeroth-order config")
    h = len(prefix)
    n, m = sys.n, sys.m
    theta = np.zeros((n, n + m))
    benchmark = cfg.target_tol is not None
    trace: list[tuple[int, int, float]] = []

    if benchmark:
        mom = propagate_moments(sys, prefix, h)
        ref = _least_squares_optimum(mom)
        eta_start, lam_plus = _zo_schedule(mom, cfg, ref)
        tol = cfg.target_tol
        if _spectral(theta - ref) <= tol:
            return InnerSolveResult(
                stage=FilterStage(a_l=theta[:, :n], b_l=theta[:, n:]),
                iterations=0,
                samples=0,
                final_error=_spectral(theta - ref),
                trace=tuple(trace),
            )
        r_scale = cfg.r0 * math.sqrt(tol)
    else:
        ref = None
        r_scale = cfg.r0

    samples = 0
    converged = not benchmark
    iterations = 0
    for i in range(1, cfg.max_iters + 1):
        iterations = i
        if benchmark:
            eta = eta_start / (1.0 + 2.0 * lam_plus * eta_start * (i - 1))
        else:
            eta = cfg.eta0 / i
        r = max(r_scale / i, 1e-12)
        grads, _, _ = _zo_gradient_batch(sys, prefix, theta, r, rng, batch=cfg.batch)
        theta = theta - eta * grads.mean(axis=0)
        samples += 2 * cfg.batch
        norm = float(np.sqrt(np.sum(theta**2)))
        if not np.isfinite(norm) or norm > cfg.divergence_bound:
            raise DivergenceError(
                f"iterate norm {norm:.3e} exceeded the divergence bound at iteration {i}",
                norm=norm,
            )
        if benchmark:
            err_f = float(np.sqrt(np.sum((theta - ref) ** 2)))
            if record_trace:
                trace.append((i, samples, err_f))
            if err_f <= tol:
                converged = True
                break
    if benchmark and not converged:
        last = _spectral(theta - ref)
        raise ConvergenceError(
            f"stochastic subproblem solve did not reach {cfg.target_tol:.3e} within "
            f"{cfg.max_iters} iterations (error {last:.3e})",
            last_error=last,
        )
    final_error = _spectral(theta - ref) if benchmark else None
    return InnerSolveResult(
        stage=FilterStage(a_l=theta[:, :n], b_l=theta[:, n:]),
        iterations=iterations,
        samples=samples,
        final_error=final_error,
        trace=tuple(trace),
    )


def evaluate_policy(stage: FilterStage, fare: FareSolution) -> PolicyEvaluation:
    """Distance of a stage from the steady-state filter, plus stability checks.

    ``within_margin`` reports whether the error clears the sufficient
    stability margin 1 - ||A_L*||_* of the closed-loop weighted norm.
    """
    target = np.hstack([fare.a_closed, fare.b_closed])
    block = stage.theta
    if block.shape != target.shape:
        raise PreconditionError(
            f"stage block {block.shape} does not match the steady-state filter {target.shape}"
        )
    error = _spectral(block - target)
    stabilizing = spectral_radius(stage.a_l) < 1.0
    return PolicyEvaluation(
        error=error,
        stabilizing=stabilizing,
        within_margin=error < 1.0 - fare.induced_norm_acl,
    )


def rhpg_kf(
    sys: LtiSystem,
    n_horizon: int,
    cfg: InnerSolverConfig,
    rng: np.random.Generator | None = None,
    benchmark_refs: RiccatiTrace | None = None,
    fare: FareSolution | None = None,
    epsilon: float | None = None,
    seed: int | None = None,
    record_trace: bool = False,
) -> tuple[FilterSequence, RunRecord]:
    """Learn a filter by solving ``n_horizon`` one-step subproblems forward in time.

    Each stage h freezes the previously learned stages as the simulation
    prefix and solves for (A_L_h, B_L_h) with the configured inner
    solver; the last learned stage is the returned policy. When
    ``benchmark_refs`` is given, per-stage gaps to the exact
    time-varying filter are recorded; when ``fare`` is given the final
    policy error against the steady-state filter is filled in.
    """
    if n_horizon < 1:
        raise PreconditionError("n_horizon must be at least 1")
    if cfg.mode == MODE_ZO and rng is None:
        raise PreconditionError("zeroth-order mode needs a random generator")
    t_start = time.perf_counter()
    prefix = FilterSequence()
    per_stage: list[StageRecord] = []
    traces: list[tuple[int, tuple]] = []
    total_samples = 0
    for h in range(n_horizon):
        if cfg.mode == MODE_EXACT:
            mom = propagate_moments(sys, prefix, h)
            result = solve_subproblem_exact(mom, cfg)
        else:
            try:
                result = solve_subproblem_zo(sys, prefix, cfg, rng, record_trace=record_trace)
            except DivergenceError as exc:
                exc.stage = h
                raise
        dp_gap = None
        if benchmark_refs is not None and h < len(benchmark_refs):
            a_ref, b_ref = benchmark_refs.stage(sys, h)
            dp_gap = _spectral(result.stage.theta - np.hstack([a_ref, b_ref]))
        per_stage.append(
            StageRecord(h, result.iterations, result.samples, result.final_error, dp_gap)
        )
        total_samples += result.samples
        if record_trace and result.trace:
            traces.append((h, result.trace))
        prefix = prefix.extended(result.stage)
    final_stage = prefix[n_horizon - 1]
    rho = spectral_radius(final_stage.a_l)
    final_error = None
    if fare is not None:
        final_error = evaluate_policy(final_stage, fare).error
    record = RunRecord(
        epsilon=epsilon,
        horizon=n_horizon,
        seed=seed,
        per_stage=tuple(per_stage),
        total_samples=total_samples,
        final_policy_error=final_error,
        final_spectral_radius=rho,
        stabilizing=rho < 1.0,
        wall_time_ms=(time.perf_counter() - t_start) * 1e3,
        traces=tuple(traces),
    )
    return prefix, record


def config_with_tol(cfg: InnerSolverConfig, tol: float, max_iters: int | None = None) -> InnerSolverConfig:
    """Copy of ``cfg`` with a per-stage tolerance (and optionally a budget) set."""
    updates: dict = {"target_tol": tol}
    if max_iters is not None:
        updates["max_iters"] = max_iters
    return replace(cfg, **updates)
