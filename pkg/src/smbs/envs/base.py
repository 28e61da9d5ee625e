from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from smbs.mdp import TabularMdp


class RandomnessError(ValueError):
    """Randomness parameter outside an environment's legal range."""


@dataclass(frozen=True)
class EnvSpec:
    name: str
    randomness: float
    state_kind: str  # "discrete" | "continuous"
    action_count: int
    episodic: bool
    num_states: int | None = None
    state_dim: int | None = None
    low: tuple[float, ...] | None = None
    high: tuple[float, ...] | None = None
    reward_range: tuple[float, float] = (-np.inf, np.inf)

    @property
    def discrete(self) -> bool:
        return self.state_kind == "discrete"


@dataclass
class EnvObservation:
    state: Any
    reward: float
    terminated: bool
    truncated: bool = False

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class Env:
    """Single-owner mutable environment with a reset/step contract."""

    spec: EnvSpec
    max_episode_steps: int | None = None

    def __init__(self, seed: int | None = None):
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.elapsed = 0

    def seed(self, seed: int | None) -> None:
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: int | None = None):
        if seed is not None:
            self.seed(seed)
        self.elapsed = 0
        self.state = self._initial_state()
        return self._observe()

    def step(self, action: int) -> EnvObservation:
        if not 0 <= action < self.spec.action_count:
            raise ValueError(f"invalid action {action}")
        if self.state is None:
            raise RuntimeError("step() before reset()")
        next_state, reward, terminated = self._transition(self.state, int(action), self.rng)
        self.state = next_state
        self.elapsed += 1
        truncated = (
            not terminated and self.max_episode_steps is not None and self.elapsed >= self.max_episode_steps
        )
        return EnvObservation(self._observe(), float(reward), bool(terminated), bool(truncated))

    def set_state(self, state) -> None:
        self.state = state

    def _observe(self):
        return self.state

    def _initial_state(self):
        raise NotImplementedError

    def _transition(self, state, action: int, rng: np.random.Generator):
        raise NotImplementedError


class DiscreteEnv(Env):
    """Environment over integer states that can enumerate its own dynamics.

    ``_transition`` samples procedurally; ``outcomes`` enumerates the same
    rule as (probability, next_state, reward, terminated) tuples.  The two are
    written independently so empirical frequencies can check the export.
    """

    terminal_states: frozenset = frozenset()

    def outcomes(self, s: int, a: int) -> list[tuple[float, int, float]]:
        raise NotImplementedError

    def start_distribution(self) -> np.ndarray:
        raise NotImplementedError

    def _initial_state(self):
        mu = self.start_distribution()
        return int(self.rng.choice(len(mu), p=mu))

    def as_tabular(self, discount: float = 0.99) -> TabularMdp:
        S, A = self.spec.num_states, self.spec.action_count
        P = np.zeros((S, A, S))
        R = np.zeros((S, A))
        term = np.zeros(S, dtype=bool)
        for s in self.terminal_states:
            term[s] = True
        for s in range(S):
            for a in range(A):
                if term[s]:
                    P[s, a, s] = 1.0
                    continue
                for p, s2, rew in self.outcomes(s, a):
                    P[s, a, s2] += p
                    R[s, a] += p * rew
        return TabularMdp(P, R, self.start_distribution(), discount, term)


def as_tabular(env: Env, discount: float = 0.99) -> TabularMdp:
    """Exact transition tensor and expected rewards of a discrete environment."""
    if not isinstance(env, DiscreteEnv):
        raise TypeError(f"{env.spec.name} is continuous and has no tabular form")
    return env.as_tabular(discount)
