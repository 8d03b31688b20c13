import numpy as np
import pytest

from rhpgkf import LtiSystem, observability_rank


@pytest.fixture(scope="session")
def scalar_system() -> LtiSystem:
    return LtiSystem(a=[[2.0]], c=[[1.0]], w=[[1.0]], v=[[1.0]], x0_mean=[1.0], x0_cov=[[5.0]])


@pytest.fixture(scope="session")
def vector_system() -> LtiSystem:
    return LtiSystem(
        a=[[9.9, -0.02], [0.01, 10.1]],
        c=[[0.99, 0.0], [-0.01, 1.01]],
        w=[[1e-3, 0.0], [0.0, 1e-3]],
        v=[[1e-2, 0.0], [0.0, 1e-2]],
        x0_mean=[0.1, 0.1],
        x0_cov=[[2.0, 0.0], [0.0, 2.0]],
    )


def random_spd(rng: np.random.Generator, n: int, boost: float = 0.2) -> np.ndarray:
    g = rng.normal(size=(n, n))
    return g @ g.T + boost * np.eye(n)


def random_system(rng: np.random.Generator, n: int, m: int) -> LtiSystem:
    """Random observable system with pd covariances and nonzero initial mean."""
    while True:
        a = rng.normal(size=(n, n))
        c = rng.normal(size=(m, n))
        if observability_rank(a, c) == n:
            break
    x0_mean = rng.normal(size=n)
    while np.linalg.norm(x0_mean) < 1e-3:
        x0_mean = rng.normal(size=n)
    return LtiSystem(
        a=a,
        c=c,
        w=random_spd(rng, n),
        v=random_spd(rng, m),
        x0_mean=x0_mean,
        x0_cov=random_spd(rng, n, boost=0.5),
    )
