"""Exact model-based reference layer.

Forward Riccati recursion for the finite-horizon error covariance, its
fixed point (the steady-state filter), the horizon bound used to pick
how far the receding-horizon learner must look, and the difference /
gain-gap identities used as correctness oracles elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, NumericsError, PreconditionError
from .sysmodel import LtiSystem, _freeze, _symmetrize, weighted_induced_norm

DEFAULT_FARE_TOL = 1e-12
DEFAULT_FARE_MAX_ITER = 100_000


@dataclass(frozen=True)
class FareSolution:
    """Steady-state filter: covariance, gain, and closed-loop data."""

    sigma_star: np.ndarray
    gain_star: np.ndarray
    a_closed: np.ndarray
    b_closed: np.ndarray
    induced_norm_acl: float
    iterations: int
    residual: float

    def __post_init__(self):
        for name in ("sigma_star", "gain_star", "a_closed", "b_closed"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))


@dataclass(frozen=True)
class RiccatiTrace:
    """Covariances Sigma_0..Sigma_N and gains L_0..L_(N-1) of the forward recursion."""

    sigmas: tuple[np.ndarray, ...]
    gains: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(_freeze(s) for s in self.sigmas))
        object.__setattr__(self, "gains", tuple(_freeze(g) for g in self.gains))

    def __len__(self) -> int:
        return len(self.gains)

    def stage(self, sys: LtiSystem, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Closed-loop stage (A - L_t C, L_t) at step t."""
        gain = self.gains[t]
        return sys.a - gain @ sys.c, gain


@dataclass(frozen=True)
class ErrorConstants:
    """Diagnostic constants bounding how per-stage optimization errors propagate.

    ``degenerate`` flags plants where the closed-loop map vanishes
    identically (phi = 0), which makes c1 lose strict positivity.
    """

    phi: float
    c1: float
    c2: float
    c3: float
    degenerate: bool


def _innovation_solve(sys: LtiSystem, sigma: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (V + C Sigma C^T) X = rhs by a symmetric factorization."""
    inn = _symmetrize(sys.v + sys.c @ sigma @ sys.c.T)
    try:
        return scipy.linalg.solve(inn, rhs, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericsError("innovation covariance is singular") from exc


def frde_step(sys: LtiSystem, sigma) -> np.ndarray:
    """One step of the forward error-covariance recursion, symmetrized."""
    sigma = _symmetrize(np.asarray(sigma, dtype=float))
    a, c, w = sys.a, sys.c, sys.w
    cs = c @ sigma @ a.T
    nxt = a @ sigma @ a.T - (a @ sigma @ c.T) @ _innovation_solve(sys, sigma, cs) + w
    return _symmetrize(nxt)


def finite_gain(sys: LtiSystem, sigma) -> np.ndarray:
    """Gain A Sigma C^T (V + C Sigma C^T)^(-1) for a given error covariance."""
    sigma = _symmetrize(np.asarray(sigma, dtype=float))
    rhs = sys.c @ sigma @ sys.a.T
    return _innovation_solve(sys, sigma, rhs).T


def lyapunov_step(sys: LtiSystem, sigma, gain) -> np.ndarray:
    """Error-covariance propagation under an arbitrary gain.

    Returns (A - L C) Sigma (A - L C)^T + L V L^T + W. Minimized over L
    by the closed-form gain, where it coincides with ``frde_step``.
    """
    sigma = _symmetrize(np.asarray(sigma, dtype=float))
    gain = np.asarray(gain, dtype=float)
    acl = sys.a - gain @ sys.c
    return _symmetrize(acl @ sigma @ acl.T + gain @ sys.v @ gain.T + sys.w)


def solve_fare(
    sys: LtiSystem,
    tol: float = DEFAULT_FARE_TOL,
    max_iter: int = DEFAULT_FARE_MAX_ITER,
) -> FareSolution:
    """Fixed-point iteration of the covariance recursion from x0_cov.

    Iterates until successive covariances agree to ``tol`` in spectral
    norm relative to the covariance scale, then assembles the
    steady-state gain and closed-loop matrix.
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    sigma = np.array(sys.x0_cov, dtype=float)
    step = 0.0
    for it in range(1, max_iter + 1):
        nxt = frde_step(sys, sigma)
        step = float(np.linalg.norm(nxt - sigma, 2))
        sigma = nxt
        if step <= tol * max(1.0, float(np.linalg.norm(sigma, 2))):
            break
    else:
        raise ConvergenceError(
            f"fixed-point iteration did not converge within {max_iter} iterations "
            f"(last step {step:.3e})",
            last_error=step,
        )
    gain = finite_gain(sys, sigma)
    a_closed = sys.a - gain @ sys.c
    residual = float(np.linalg.norm(frde_step(sys, sigma) - sigma, 2))
    induced = weighted_induced_norm(a_closed, sigma)
    return FareSolution(
        sigma_star=sigma,
        gain_star=gain,
        a_closed=a_closed,
        b_closed=gain,
        induced_norm_acl=induced,
        iterations=it,
        residual=residual,
    )


def riccati_trace(sys: LtiSystem, n_steps: int) -> RiccatiTrace:
    """Forward recursion Sigma_0 = x0_cov for ``n_steps`` steps, with gains."""
    if n_steps < 1:
        raise PreconditionError("n_steps must be at least 1")
    sigmas = [np.array(sys.x0_cov, dtype=float)]
    gains = []
    for _ in range(n_steps):
        gains.append(finite_gain(sys, sigmas[-1]))
        sigmas.append(frde_step(sys, sigmas[-1]))
    return RiccatiTrace(sigmas=tuple(sigmas), gains=tuple(gains))


def horizon_bound(sys: LtiSystem, fare: FareSolution, eps: float) -> int:
    """Smallest horizon guaranteeing the finite-horizon gain is eps-close to steady state.

    Ceiling of
        0.5 * log(||X0 - Sigma*||_* kappa(Sigma*) ||A_L*|| ||C|| / (eps lambda_min(V)))
            / log(1 / ||A_L*||_*) + 1,
    floored at 1, where ||.||_* is the Sigma*-weighted operator norm.
    """
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    rho_w = fare.induced_norm_acl
    if rho_w >= 1.0:
        raise PreconditionError(
            f"weighted closed-loop norm is {rho_w:.6f} >= 1; the horizon bound does not apply"
        )
    diff_w = weighted_induced_norm(sys.x0_cov - fare.sigma_star, fare.sigma_star)
    kappa = float(np.linalg.cond(fare.sigma_star, 2))
    lam_min_v = float(np.linalg.eigvalsh(sys.v)[0])
    arg = diff_w * kappa * float(np.linalg.norm(fare.a_closed, 2)) * float(
        np.linalg.norm(sys.c, 2)
    ) / (eps * lam_min_v)
    if arg <= 1.0:
        return 1
    n0 = 0.5 * math.log(arg) / math.log(1.0 / rho_w) + 1.0
    return max(1, math.ceil(n0))


def rde_difference_step(sys: LtiSystem, sigma1, sigma2) -> np.ndarray:
    """Propagate the difference of two covariance recursions in one step.

    With D = sigma2 - sigma1, Vt = V + C sigma1 C^T and
    Abar = A - A sigma1 C^T Vt^(-1) C, returns
        Abar D Abar^T - Abar D C^T (Vt + C D C^T)^(-1) C D Abar^T,
    which equals frde_step(sigma2) - frde_step(sigma1).
    """
    s1 = _symmetrize(np.asarray(sigma1, dtype=float))
    s2 = _symmetrize(np.asarray(sigma2, dtype=float))
    diff = s2 - s1
    a, c, v = sys.a, sys.c, sys.v
    vt = _symmetrize(v + c @ s1 @ c.T)
    try:
        abar = a - a @ s1 @ c.T @ scipy.linalg.solve(vt, c, assume_a="pos")
        inner = _symmetrize(vt + c @ diff @ c.T)
        mid = scipy.linalg.solve(inner, c @ diff @ abar.T, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericsError("inner matrix in the difference recursion is singular") from exc
    return _symmetrize(abar @ diff @ abar.T - (abar @ diff @ c.T) @ mid)


def gain_gap_identity(sys: LtiSystem, fare: FareSolution, sigma_t) -> np.ndarray:
    """Closed form for finite_gain(sigma_t) - L* in terms of Sigma* - sigma_t."""
    sigma_t = _symmetrize(np.asarray(sigma_t, dtype=float))
    lc_minus_a = fare.gain_star @ sys.c - sys.a
    lhs = lc_minus_a @ (fare.sigma_star - sigma_t) @ sys.c.T
    return _innovation_solve(sys, sigma_t, lhs.T).T


def error_constants(sys: LtiSystem, fare: FareSolution, trace: RiccatiTrace) -> ErrorConstants:
    """Diagnostic constants from a gain trace and the steady-state solution."""
    if len(trace) == 0:
        raise PreconditionError("trace must contain at least one gain")
    phi = max(
        float(np.linalg.norm(sys.a - gain @ sys.c, 2)) for gain in trace.gains
    )
    lam_min_v = float(np.linalg.eigvalsh(sys.v)[0])
    norm_c = float(np.linalg.norm(sys.c, 2))
    norm_a = float(np.linalg.norm(sys.a, 2))
    cov_scale = float(np.linalg.norm(sys.x0_cov, 2)) + float(np.linalg.norm(fare.sigma_star, 2))
    c1 = phi * norm_c / lam_min_v
    c2 = 2.0 * norm_a * (phi + c1 * norm_c * cov_scale)
    c3 = 2.0 * (float(np.linalg.norm(sys.v, 2)) + norm_c**2 * cov_scale)
    return ErrorConstants(phi=phi, c1=c1, c2=c2, c3=c3, degenerate=(phi == 0.0))
