"""Trajectory simulator, exact moment propagation, and the two-point gradient oracle.

The one-step learning subproblem at stage h is a quadratic in the
stacked filter parameters Theta = [A_L  B_L]: with regressor
s = [xhat_h; y_h], second moment M = E[s s^T] and cross moment
Xi = E[x_(h+1) s^T], the mean-square error of the horizon-(h+1) filter is

    J_h(Theta) = offset + tr(Theta M Theta^T) - 2 tr(Theta Xi^T).

Everything here is exact for the linear-Gaussian closed loop, which is
what makes the module usable as an oracle for the stochastic learner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, NumericsError, PreconditionError
from .sysmodel import LtiSystem, _freeze, _symmetrize

# Eigenvalues of the regressor second moment below this (relative) level
# are treated as exact zeros when solving for the subproblem optimum.
MOMENT_RANK_TOL = 1e-12


@dataclass(frozen=True)
class FilterStage:
    """One pair (A_L, B_L); the stacked block [A_L  B_L] is the optimization variable."""

    a_l: np.ndarray
    b_l: np.ndarray

    def __post_init__(self):
        a_l = np.atleast_2d(np.asarray(self.a_l, dtype=float))
        b_l = np.atleast_2d(np.asarray(self.b_l, dtype=float))
        if a_l.shape[0] != a_l.shape[1]:
            raise DimensionMismatchError(f"a_l must be square, got {a_l.shape}")
        if b_l.shape[0] != a_l.shape[0]:
            raise DimensionMismatchError(
                f"b_l must have {a_l.shape[0]} rows, got {b_l.shape}"
            )
        object.__setattr__(self, "a_l", _freeze(a_l))
        object.__setattr__(self, "b_l", _freeze(b_l))

    @property
    def theta(self) -> np.ndarray:
        """Stacked n x (n+m) parameter block [A_L  B_L]."""
        return np.hstack([self.a_l, self.b_l])

    @classmethod
    def from_theta(cls, theta: np.ndarray, n: int, m: int) -> "FilterStage":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (n, n + m):
            raise DimensionMismatchError(f"theta must be {n}x{n + m}, got {theta.shape}")
        return cls(a_l=theta[:, :n], b_l=theta[:, n:])

    @classmethod
    def zeros(cls, n: int, m: int) -> "FilterStage":
        return cls(a_l=np.zeros((n, n)), b_l=np.zeros((n, m)))


@dataclass(frozen=True)
class FilterSequence:
    """Time-indexed filter stages t = 0..h-1, applied before the stage being learned."""

    stages: tuple[FilterStage, ...] = ()

    def __post_init__(self):
        stages = tuple(self.stages)
        for stage in stages[1:]:
            if stage.a_l.shape != stages[0].a_l.shape or stage.b_l.shape != stages[0].b_l.shape:
                raise DimensionMismatchError("all stages must share the same dimensions")
        object.__setattr__(self, "stages", stages)

    def __len__(self) -> int:
        return len(self.stages)

    def __getitem__(self, idx) -> FilterStage:
        return self.stages[idx]

    def extended(self, stage: FilterStage) -> "FilterSequence":
        return FilterSequence(self.stages + (stage,))


class Trajectory(NamedTuple):
    """States x_0..x_T, outputs y_0..y_(T-1), and estimates xhat_0..xhat_T."""

    xs: np.ndarray
    ys: np.ndarray
    xhats: np.ndarray


@dataclass(frozen=True)
class MomentSet:
    """Exact second-order description of the stage-h subproblem.

    ``offset`` is the full constant term of the horizon-(h+1) objective
    (accumulated prior mean-square errors plus E||x_(h+1)||^2);
    ``offset_final`` is the E||x_(h+1)||^2 part alone, the constant of
    the final-step term the two-point oracle evaluates.
    """

    step: int
    mean_joint: np.ndarray
    cov_joint: np.ndarray
    regressor_second_moment: np.ndarray
    cross_moment: np.ndarray
    offset: float
    offset_final: float

    def __post_init__(self):
        for name in ("mean_joint", "cov_joint", "regressor_second_moment", "cross_moment"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))


@dataclass(frozen=True)
class GradientEstimate:
    """Two-point gradient estimate; one oracle call consumes two objective queries."""

    g: np.ndarray
    samples_used: int
    j_plus: float
    j_minus: float

    def __post_init__(self):
        object.__setattr__(self, "g", _freeze(self.g))


def _check_prefix(sys: LtiSystem, prefix: FilterSequence, needed: int):
    if len(prefix) < needed:
        raise DimensionMismatchError(
            f"prefix has {len(prefix)} stages but {needed} are required"
        )
    for stage in prefix.stages:
        if stage.a_l.shape != (sys.n, sys.n) or stage.b_l.shape != (sys.n, sys.m):
            raise DimensionMismatchError(
                f"stage shapes {stage.a_l.shape}/{stage.b_l.shape} do not match the system"
            )


def rollout(sys: LtiSystem, prefix: FilterSequence, horizon: int, rng: np.random.Generator) -> Trajectory:
    """Simulate states, outputs, and filter estimates for ``horizon`` steps.

    x_0 ~ N(x0_mean, x0_cov), xhat_0 = x0_mean, and per step t the draws
    are taken in the order (v_t, w_t). Deterministic given the generator
    state.
    """
    if horizon < 1:
        raise PreconditionError("horizon must be at least 1")
    _check_prefix(sys, prefix, horizon)
    n, m = sys.n, sys.m
    xs = np.empty((horizon + 1, n))
    ys = np.empty((horizon, m))
    xhats = np.empty((horizon + 1, n))
    xs[0] = sys.x0_mean + sys.chol_x0 @ rng.standard_normal(n)
    xhats[0] = sys.x0_mean
    for t in range(horizon):
        v = sys.chol_v @ rng.standard_normal(m)
        w = sys.chol_w @ rng.standard_normal(n)
        ys[t] = sys.c @ xs[t] + v
        xs[t + 1] = sys.a @ xs[t] + w
        stage = prefix[t]
        xhats[t + 1] = stage.a_l @ xhats[t] + stage.b_l @ ys[t]
    return Trajectory(xs=xs, ys=ys, xhats=xhats)


def _simulate_stage_batch(
    sys: LtiSystem,
    prefix: FilterSequence,
    rng: np.random.Generator,
    size: int,
    track_prior: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Vectorized simulation of ``size`` independent trajectories to stage h = len(prefix).

    Returns (x_(h+1) of shape (size, n), regressors [xhat_h; y_h] of shape
    (size, n+m), accumulated prior squared errors or None). Draw order per
    lane-step matches ``rollout``: x_0, then (v_t, w_t) for each t.
    """
    n, m = sys.n, sys.m
    h = len(prefix)
    x = sys.x0_mean + rng.standard_normal((size, n)) @ sys.chol_x0.T
    xhat = np.broadcast_to(sys.x0_mean, (size, n)).copy()
    prior = np.zeros(size) if track_prior else None
    for t in range(h):
        if track_prior:
            prior += np.sum((x - xhat) ** 2, axis=1)
        v = rng.standard_normal((size, m)) @ sys.chol_v.T
        w = rng.standard_normal((size, n)) @ sys.chol_w.T
        y = x @ sys.c.T + v
        stage = prefix[t]
        xhat = xhat @ stage.a_l.T + y @ stage.b_l.T
        x = x @ sys.a.T + w
    if track_prior:
        prior += np.sum((x - xhat) ** 2, axis=1)
    v = rng.standard_normal((size, m)) @ sys.chol_v.T
    w = rng.standard_normal((size, n)) @ sys.chol_w.T
    y = x @ sys.c.T + v
    x_next = x @ sys.a.T + w
    regressors = np.hstack([xhat, y])
    return x_next, regressors, prior


def propagate_moments(sys: LtiSystem, prefix: FilterSequence, h: int) -> MomentSet:
    """Exact mean/covariance of the joint (state, estimate) process at stage h.

    Propagates the closed-loop linear map through the first h stages of
    ``prefix`` and assembles the regressor second moment, the cross
    moment with x_(h+1), and the constant objective terms.
    """
    if h < 0:
        raise PreconditionError("h must be nonnegative")
    _check_prefix(sys, prefix, h)
    n, m = sys.n, sys.m
    a, c, w, v = sys.a, sys.c, sys.w, sys.v
    mu = np.concatenate([sys.x0_mean, sys.x0_mean])
    cov = np.zeros((2 * n, 2 * n))
    cov[:n, :n] = sys.x0_cov
    prior = 0.0
    for t in range(h):
        second = cov + np.outer(mu, mu)
        prior += float(
            np.trace(second[:n, :n] - second[:n, n:] - second[n:, :n] + second[n:, n:])
        )
        stage = prefix[t]
        f = np.block([[a, np.zeros((n, n))], [stage.b_l @ c, stage.a_l]])
        noise = np.block(
            [[w, np.zeros((n, n))], [np.zeros((n, n)), stage.b_l @ v @ stage.b_l.T]]
        )
        mu = f @ mu
        cov = _symmetrize(f @ cov @ f.T + noise)
    second = cov + np.outer(mu, mu)
    prior += float(
        np.trace(second[:n, :n] - second[:n, n:] - second[n:, :n] + second[n:, n:])
    )
    sxx = second[:n, :n]
    sxh = second[:n, n:]
    shh = second[n:, n:]
    reg = np.block([[shh, sxh.T @ c.T], [c @ sxh, c @ sxx @ c.T + v]])
    cross = np.hstack([a @ sxh, a @ sxx @ c.T])
    offset_final = float(np.trace(a @ sxx @ a.T) + np.trace(w))
    return MomentSet(
        step=h,
        mean_joint=mu,
        cov_joint=cov,
        regressor_second_moment=_symmetrize(reg),
        cross_moment=cross,
        offset=prior + offset_final,
        offset_final=offset_final,
    )


def _check_theta(mom: MomentSet, theta: FilterStage) -> np.ndarray:
    block = theta.theta
    n_plus_m = mom.regressor_second_moment.shape[0]
    if block.shape[1] != n_plus_m or block.shape != mom.cross_moment.shape:
        raise DimensionMismatchError(
            f"theta block {block.shape} does not match moments {mom.cross_moment.shape}"
        )
    return block


def subproblem_objective(mom: MomentSet, theta: FilterStage) -> float:
    """Exact mean-square error of the stage objective at the given parameters."""
    block = _check_theta(mom, theta)
    quad = float(np.trace(block @ mom.regressor_second_moment @ block.T))
    lin = float(np.trace(block @ mom.cross_moment.T))
    return mom.offset + quad - 2.0 * lin


def exact_subproblem_gradient(mom: MomentSet, theta: FilterStage) -> np.ndarray:
    """Gradient 2 (Theta M - Xi) of the stage objective."""
    block = _check_theta(mom, theta)
    return 2.0 * (block @ mom.regressor_second_moment - mom.cross_moment)


def _least_squares_optimum(mom: MomentSet) -> np.ndarray:
    """Minimum-norm solution of Theta M = Xi (robust to a rank-deficient M)."""
    m_mat = mom.regressor_second_moment
    sol, *_ = np.linalg.lstsq(m_mat, mom.cross_moment.T, rcond=MOMENT_RANK_TOL)
    return sol.T


def subproblem_optimum(mom: MomentSet) -> FilterStage:
    """Unique minimizer Xi M^(-1) of the stage objective; requires M positive definite."""
    m_mat = mom.regressor_second_moment
    eig = np.linalg.eigvalsh(m_mat)
    if eig[0] <= MOMENT_RANK_TOL * max(1.0, eig[-1]):
        raise NumericsError(
            f"regressor second moment is singular (lambda_min = {eig[0]:.3e}); "
            "the stage objective has no unique minimizer"
        )
    sol = np.linalg.solve(m_mat, mom.cross_moment.T).T
    n = sol.shape[0]
    return FilterStage(a_l=sol[:, :n], b_l=sol[:, n:])


def _sample_sphere(rng: np.random.Generator, size: int, n: int, cols: int) -> np.ndarray:
    """Uniform samples on the unit Frobenius sphere of n x cols matrices."""
    u = rng.standard_normal((size, n, cols))
    norms = np.sqrt(np.einsum("bij,bij->b", u, u))
    return u / norms[:, None, None]


def _zo_gradient_batch(
    sys: LtiSystem,
    prefix: FilterSequence,
    theta_block: np.ndarray,
    r: float,
    rng: np.random.Generator,
    batch: int,
    full_sum: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``batch`` independent two-point estimates, evaluated on vectorized lanes.

    Returns (per-lane gradients of shape (batch, n, n+m), J+ values, J- values).
    The direction is drawn before the trajectory, matching the single-call
    oracle, so batch=1 reproduces ``zo_oracle`` draw for draw.
    """
    n, m = sys.n, sys.m
    dim = n * (n + m)
    u = _sample_sphere(rng, batch, n, n + m)
    x_next, s, prior = _simulate_stage_batch(sys, prefix, rng, batch, track_prior=full_sum)
    base = x_next - s @ theta_block.T      # residual at theta, lane-wise
    pert = r * np.einsum("bij,bj->bi", u, s)
    final_plus = np.sum((base - pert) ** 2, axis=1)
    final_minus = np.sum((base + pert) ** 2, axis=1)
    # Constant prior terms cancel in the difference; forming it from the
    # final-step values makes both objective variants give the identical
    # estimate.
    diff = final_plus - final_minus
    grads = (dim / (2.0 * r)) * diff[:, None, None] * u
    if full_sum:
        return grads, final_plus + prior, final_minus + prior
    return grads, final_plus, final_minus


def zo_oracle(
    sys: LtiSystem,
    prefix: FilterSequence,
    theta: FilterStage,
    r: float,
    rng: np.random.Generator,
    full_sum: bool = False,
) -> GradientEstimate:
    """Two-point gradient estimate from a single shared trajectory.

    Samples a direction U uniformly on the unit Frobenius sphere, rolls one
    trajectory to stage h = len(prefix), evaluates the empirical squared
    error of the one-step filters at theta +- r U, and returns

        g = n (n + m) / (2 r) * (J+ - J-) * U.

    By default the empirical objectives contain only the final-step term;
    ``full_sum`` adds the parameter-independent prior errors, which cancel
    exactly in the difference and leave the estimate unchanged.
    """
    if r <= 0:
        raise PreconditionError("smoothing radius r must be positive")
    _check_prefix(sys, prefix, len(prefix))
    grads, j_plus, j_minus = _zo_gradient_batch(
        sys, prefix, theta.theta, r, rng, batch=1, full_sum=full_sum
    )
    return GradientEstimate(
        g=grads[0], samples_used=2, j_plus=float(j_plus[0]), j_minus=float(j_minus[0])
    )
