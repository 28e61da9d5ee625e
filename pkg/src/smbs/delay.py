"""Constant observation delay around any environment.

The wrapped environment always runs at the true time.  The controller sees
the state from ``d`` steps ago together with the ``d`` actions submitted
since, and each newly observed step is released as a non-delayed
:class:`TransitionRecord` pairing a state with the action applied to it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from smbs.envs.base import Env

QueueInit = Callable[[np.random.Generator], int]


@dataclass(frozen=True)
class AugmentedState:
    base_state: Any
    action_queue: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.action_queue)


@dataclass(frozen=True)
class TransitionRecord:
    s: Any
    a: int
    s_next: Any
    reward: float
    terminated: bool


def constant_action(action: int) -> QueueInit:
    return lambda rng: action


def uniform_actions(num_actions: int) -> QueueInit:
    return lambda rng: int(rng.integers(num_actions))


class EpisodeFinished(RuntimeError):
    pass


class DelayedEnv:
    """``d``-step delayed view of ``env``.

    ``reset`` primes the queue with ``d`` actions from ``queue_init`` and
    really executes them.  ``step`` executes the new action, then releases
    the oldest unobserved transition.  Termination is reported at once; the
    remaining unobserved transitions are flushed into the record buffer and
    their rewards are summed into the returned reward so that delayed rewards
    over an episode add up to the raw episode return.
    """

    def __init__(self, env: Env, d: int, queue_init: QueueInit | None = None, seed: int | None = None):
        if d < 0:
            raise ValueError("delay must be nonnegative")
        self.env = env
        self.d = int(d)
        self.queue_init = queue_init or uniform_actions(env.spec.action_count)
        self.rng = np.random.default_rng(seed)
        self._pending: deque = deque()
        self._records: list[TransitionRecord] = []
        self._base = None
        self._done = True
        self.last_terminated = False
        self.env_steps = 0

    @property
    def spec(self):
        return self.env.spec

    @property
    def hidden_state(self):
        """True current state of the underlying environment."""
        return self.env.state

    @property
    def state(self) -> AugmentedState:
        return AugmentedState(self._base, tuple(p[1] for p in self._pending))

    def reset(self, seed: int | None = None) -> AugmentedState:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        while True:
            self._pending.clear()
            self._base = self.env.reset()
            self._done = False
            primed = True
            for _ in range(self.d):
                if not self._execute(self.queue_init(self.rng)):
                    primed = False
                    break
            if primed:
                return self.state
            self._flush()

    def _execute(self, action: int) -> bool:
        """Run ``action`` on the true environment; False if the episode ended."""
        prev = self.env.state
        prev = prev.copy() if isinstance(prev, np.ndarray) else prev
        obs = self.env.step(action)
        self.env_steps += 1
        self._pending.append((prev, int(action), obs.state, obs.reward, obs.terminated))
        return not obs.done

    def _flush(self) -> float:
        total = 0.0
        while self._pending:
            s, a, s2, rew, term = self._pending.popleft()
            self._records.append(TransitionRecord(s, a, s2, rew, term))
            self._base = s2
            total += rew
        return total

    def step(self, action: int) -> tuple[AugmentedState, float, bool]:
        """Returns the next augmented state, the newly observed reward and done.

        On the terminal step the returned state is the ordinary next
        augmented state; ``last_terminated`` tells termination from truncation.
        """
        if self._done:
            raise EpisodeFinished("step() on a finished episode; call reset()")
        alive = self._execute(action)
        s, a, s2, rew, term = self._pending.popleft()
        self._records.append(TransitionRecord(s, a, s2, rew, term))
        self._base = s2
        observed = self.state
        if alive:
            return observed, rew, False
        self._done = True
        self.last_terminated = bool(self._pending[-1][4]) if self._pending else bool(term)
        return observed, rew + self._flush(), True

    def drain_transitions(self) -> list[TransitionRecord]:
        out, self._records = self._records, []
        return out


def wrap(env: Env, d: int, queue_init: QueueInit | None = None, seed: int | None = None) -> DelayedEnv:
    return DelayedEnv(env, d, queue_init, seed)
