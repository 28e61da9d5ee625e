import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from smbs.mdp import TabularMdp

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_mdp(S: int, A: int, seed: int, discount: float = 0.9, deterministic: bool = False) -> TabularMdp:
    rng = np.random.default_rng(seed)
    if deterministic:
        P = np.zeros((S, A, S))
        nxt = rng.integers(S, size=(S, A))
        P[np.arange(S)[:, None], np.arange(A)[None, :], nxt] = 1.0
    else:
        P = rng.random((S, A, S)) * (rng.random((S, A, S)) < 0.6)
        P[..., 0] += 1e-3
        P /= P.sum(axis=2, keepdims=True)
    reward = rng.normal(size=(S, A))
    mu = np.full(S, 1.0 / S)
    return TabularMdp(P, reward, mu, discount)


@pytest.fixture
def chain_mdp():
    """s0 -> s1 with reward 0; s1 absorbing with reward 1 per step."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    return TabularMdp(P, np.array([[0.0], [1.0]]), np.array([1.0, 0.0]), 0.5)
