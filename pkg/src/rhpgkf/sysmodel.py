"""Core domain types for linear-Gaussian state estimation.

Holds the plant description (state transition, output map, noise
covariances, initial-state statistics), the validation report for the
standing assumptions, and the spectral / weighted-norm helpers the rest
of the package is written in terms of.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NumericsError, PreconditionError

if TYPE_CHECKING:  # pragma: no cover
    from .riccati import FareSolution

# Scale-aware positive-definiteness test: lambda_min > PD_TOL * max(1, ||M||).
PD_TOL = 1e-10
# Singular values below RANK_TOL * sigma_max count as zero.
RANK_TOL = 1e-9


def _as_matrix(value, name: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise DimensionMismatchError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _symmetrize(arr: np.ndarray) -> np.ndarray:
    return (arr + arr.T) / 2.0


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time plant x' = A x + w, y = C x + v with Gaussian noise.

    Covariance inputs are symmetrized on ingestion; all fields are
    immutable after construction and safe to share across workers.
    """

    a: np.ndarray
    c: np.ndarray
    w: np.ndarray
    v: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.a, "a")
        n = a.shape[1]
        if a.shape[0] != n:
            raise DimensionMismatchError(f"a must be square, got {a.shape}")
        c = _as_matrix(self.c, "c")
        if c.shape[1] != n:
            raise DimensionMismatchError(f"c must have {n} columns, got {c.shape}")
        m = c.shape[0]
        w = _symmetrize(_as_matrix(self.w, "w", (n, n)))
        v = _symmetrize(_as_matrix(self.v, "v", (m, m)))
        x0_cov = _symmetrize(_as_matrix(self.x0_cov, "x0_cov", (n, n)))
        x0_mean = np.asarray(self.x0_mean, dtype=float).reshape(-1)
        if x0_mean.shape != (n,):
            raise DimensionMismatchError(f"x0_mean must have length {n}, got {x0_mean.shape}")
        object.__setattr__(self, "a", _freeze(a))
        object.__setattr__(self, "c", _freeze(c))
        object.__setattr__(self, "w", _freeze(w))
        object.__setattr__(self, "v", _freeze(v))
        object.__setattr__(self, "x0_cov", _freeze(x0_cov))
        object.__setattr__(self, "x0_mean", _freeze(x0_mean))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @cached_property
    def chol_w(self) -> np.ndarray:
        return _chol_or_raise(self.w, "w")

    @cached_property
    def chol_v(self) -> np.ndarray:
        return _chol_or_raise(self.v, "v")

    @cached_property
    def chol_x0(self) -> np.ndarray:
        return _chol_or_raise(self.x0_cov, "x0_cov")


def _chol_or_raise(mat: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"{name} is not positive definite; cannot factor") from exc


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking the standing modelling assumptions.

    ``pd_checks`` lists (matrix name, smallest eigenvalue); the
    observability rank must equal the state dimension; the optional
    initial-covariance dominance check is filled only when a steady-state
    solution is supplied.
    """

    pd_checks: tuple[tuple[str, float], ...]
    observability_rank: int
    x0_dominates_sigma: bool | None
    messages: tuple[str, ...]
    passed: bool
    margins: dict = field(default_factory=dict, compare=False)


def spectral_radius(mat) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    arr = _as_matrix(mat, "matrix")
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"spectral_radius needs a square matrix, got {arr.shape}")
    try:
        eig = np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericsError("eigenvalue computation did not converge") from exc
    return float(np.max(np.abs(eig))) if eig.size else 0.0


def psd_sqrt(mat) -> np.ndarray:
    """Unique symmetric psd square root of a symmetric psd matrix.

    Eigenvalues within -PD_TOL * scale of zero are clamped to zero;
    anything more negative is a precondition failure.
    """
    arr = _symmetrize(_as_matrix(mat, "matrix"))
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"psd_sqrt needs a square matrix, got {arr.shape}")
    eigval, eigvec = np.linalg.eigh(arr)
    scale = max(1.0, float(np.max(np.abs(eigval))) if eigval.size else 1.0)
    if eigval.size and eigval[0] < -PD_TOL * scale:
        raise PreconditionError(
            f"matrix is not positive semidefinite (lambda_min = {eigval[0]:.3e})"
        )
    root = eigvec @ np.diag(np.sqrt(np.clip(eigval, 0.0, None))) @ eigvec.T
    return _symmetrize(root)


def weighted_induced_norm(x, wt) -> float:
    """Operator norm of ``x`` measured in the inner product induced by pd ``wt``.

    Computed as the spectral norm of Wt^(1/2) X Wt^(-1/2).
    """
    x = _as_matrix(x, "x")
    wt = _symmetrize(_as_matrix(wt, "wt"))
    n = x.shape[0]
    if x.shape != (n, n) or wt.shape != (n, n):
        raise DimensionMismatchError(
            f"x and wt must both be {n}x{n}, got {x.shape} and {wt.shape}"
        )
    eigval = np.linalg.eigvalsh(wt)
    if eigval[0] <= PD_TOL * max(1.0, eigval[-1]):
        raise PreconditionError(f"weight matrix is not positive definite (lambda_min = {eigval[0]:.3e})")
    root = psd_sqrt(wt)
    return float(np.linalg.norm(root @ x @ np.linalg.inv(root), 2))


def observability_rank(a, c) -> int:
    """Numerical rank of the stacked observability matrix [C; CA; ...; CA^(n-1)]."""
    a = _as_matrix(a, "a")
    c = _as_matrix(c, "c")
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionMismatchError(f"a must be square, got {a.shape}")
    if c.shape[1] != n:
        raise DimensionMismatchError(f"c must have {n} columns, got {c.shape}")
    blocks = []
    block = c
    for _ in range(n):
        blocks.append(block)
        block = block @ a
    obs = np.vstack(blocks)
    sv = scipy.linalg.svdvals(obs)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_TOL * sv[0]))


def _pd_margin(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(mat)[0])


def validate_system(sys: LtiSystem, fare: "FareSolution | None" = None) -> ValidationReport:
    """Check the assumptions the learning guarantees rest on.

    Verifies positive definiteness of the noise and initial covariances,
    observability of (C, A), a nonzero initial mean, and, when a
    steady-state solution is supplied, that the initial covariance
    dominates it. Margins are reported; no minimum dominance margin is
    enforced.
    """
    checks: list[tuple[str, float]] = []
    messages: list[str] = []
    margins: dict = {}
    passed = True

    for name, mat in (("w", sys.w), ("v", sys.v), ("x0_cov", sys.x0_cov)):
        lam_min = _pd_margin(mat)
        checks.append((name, lam_min))
        threshold = PD_TOL * max(1.0, float(np.linalg.norm(mat, 2)))
        if lam_min <= threshold:
            passed = False
            messages.append(f"{name} is not positive definite (lambda_min = {lam_min:.3e})")
        else:
            messages.append(f"{name} positive definite (lambda_min = {lam_min:.3e})")

    rank = observability_rank(sys.a, sys.c)
    if rank < sys.n:
        passed = False
        messages.append(f"(c, a) unobservable: observability rank {rank} < {sys.n}")
    else:
        messages.append(f"(c, a) observable: rank {rank}")

    x0_norm = float(np.linalg.norm(sys.x0_mean))
    margins["x0_mean_norm"] = x0_norm
    if x0_norm == 0.0:
        passed = False
        messages.append("x0_mean is zero; a nonzero initial mean is required")
    else:
        messages.append(f"x0_mean nonzero (norm = {x0_norm:.3e})")

    dominates: bool | None = None
    if fare is not None:
        margin = _pd_margin(sys.x0_cov - fare.sigma_star)
        margins["x0_minus_sigma_star"] = margin
        dominates = margin > 0.0
        if dominates:
            messages.append(f"x0_cov dominates the steady-state covariance (margin = {margin:.3e})")
        else:
            passed = False
            messages.append(
                f"x0_cov does not dominate the steady-state covariance (margin = {margin:.3e})"
            )

    return ValidationReport(
        pd_checks=tuple(checks),
        observability_rank=rank,
        x0_dominates_sigma=dominates,
        messages=tuple(messages),
        passed=passed,
        margins=margins,
    )
