"""Tabular Q-learning and Double DQN with a FIFO replay buffer.

Every Q-function here exposes ``values(states) -> (N, A)`` so the planning
policies can score batches of sampled target states without caring whether
the values come from a table or a network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from smbs.delay import AugmentedState, TransitionRecord
from smbs.mdp import argmax_lowest, dumps_matrix, encode_augmented, loads_matrix
from smbs.nn import AdamState, Mlp, adam_step


class TabularQ:
    def __init__(self, q: np.ndarray):
        self.q = np.asarray(q, dtype=np.float64)

    @classmethod
    def zeros(cls, num_states: int, num_actions: int) -> "TabularQ":
        return cls(np.zeros((num_states, num_actions)))

    @property
    def num_actions(self) -> int:
        return self.q.shape[1]

    def values(self, states) -> np.ndarray:
        return self.q[np.asarray(states, dtype=np.int64)]

    def dumps(self) -> str:
        return dumps_matrix("q", self.q)

    @classmethod
    def loads(cls, text: str) -> "TabularQ":
        return cls(loads_matrix(text, "q"))


def tabular_q_update(q: TabularQ, rec: TransitionRecord, gamma: float, lr: float) -> TabularQ:
    s, a, s2 = int(rec.s), int(rec.a), int(rec.s_next)
    bootstrap = 0.0 if rec.terminated else gamma * q.q[s2].max()
    q.q[s, a] += lr * (rec.reward + bootstrap - q.q[s, a])
    return q


class AugmentedTabularQ:
    """Exact q~* over the mixed-radix augmented encoding of ``build_amdp``."""

    def __init__(self, q_aug: np.ndarray, num_actions: int, d: int):
        self.q = np.asarray(q_aug, dtype=np.float64)
        self.num_actions = num_actions
        self.d = d

    def values(self, states: Sequence[AugmentedState]) -> np.ndarray:
        idx = [encode_augmented(I.base_state, I.action_queue, self.num_actions) for I in states]
        if any(len(I.action_queue) != self.d for I in states):
            raise ValueError(f"augmented state does not carry {self.d} queued actions")
        return self.q[idx]


# --- feature encoders ---------------------------------------------------------


class OneHotEncoder:
    def __init__(self, num_states: int):
        self.num_states = num_states
        self.dim = num_states

    def pack(self, state) -> np.ndarray:
        return np.array([state], dtype=np.float64)

    def __call__(self, packed: np.ndarray) -> np.ndarray:
        idx = np.asarray(packed, dtype=np.int64).reshape(-1)
        out = np.zeros((len(idx), self.num_states))
        out[np.arange(len(idx)), idx] = 1.0
        return out


class BoxEncoder:
    """Affine map of the declared state box onto [-1, 1]."""

    def __init__(self, low, high):
        low, high = np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64)
        self.center = (low + high) / 2.0
        self.scale = (high - low) / 2.0
        self.dim = len(low)

    def pack(self, state) -> np.ndarray:
        return np.asarray(state, dtype=np.float64)

    def __call__(self, packed: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(packed) - self.center) / self.scale


class AugmentedEncoder:
    """Base-state features followed by one one-hot block per queued action."""

    def __init__(self, base, num_actions: int, d: int):
        self.base = base
        self.num_actions = num_actions
        self.d = d
        self.base_width = len(base.pack(np.zeros(base.dim) if isinstance(base, BoxEncoder) else 0))
        self.dim = base.dim + d * num_actions

    def pack(self, I: AugmentedState) -> np.ndarray:
        if len(I.action_queue) != self.d:
            raise ValueError(f"augmented state has queue length {len(I.action_queue)}, expected {self.d}")
        return np.concatenate([self.base.pack(I.base_state), np.asarray(I.action_queue, dtype=np.float64)])

    def __call__(self, packed: np.ndarray) -> np.ndarray:
        packed = np.atleast_2d(packed)
        n = len(packed)
        feats = [self.base(packed[:, : self.base_width])]
        if self.d:
            queue = packed[:, self.base_width :].astype(np.int64)
            block = np.zeros((n, self.d, self.num_actions))
            rows = np.repeat(np.arange(n), self.d)
            slots = np.tile(np.arange(self.d), n)
            block[rows, slots, queue.ravel()] = 1.0
            feats.append(block.reshape(n, -1))
        return np.hstack(feats)


# --- replay and DDQN ----------------------------------------------------------


class ReplayBuffer:
    """Fixed-capacity FIFO ring buffer of packed transitions."""

    def __init__(self, capacity: int, width: int):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, width))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, width))
        self.term = np.zeros(capacity)
        self.size = 0
        self.inserted = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r, s2, terminated) -> None:
        i = self.inserted % self.capacity
        self.s[i], self.a[i], self.r[i], self.s2[i], self.term[i] = s, a, r, s2, float(terminated)
        self.inserted += 1
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(self.size, size=batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.term[idx]

    def contents(self):
        """Stored transitions, oldest first."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self.inserted) % self.capacity
        return self.s[order], self.a[order], self.r[order], self.s2[order], self.term[order]


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 50_000

    def __call__(self, t: int) -> float:
        if t >= self.decay_steps:
            return self.end
        return self.start + (t / self.decay_steps) * (self.end - self.start)


class DqnAgent:
    def __init__(
        self,
        encoder,
        num_actions: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (64, 64),
        lr: float = 1e-3,
        gamma: float = 0.99,
        capacity: int = 50_000,
        batch_size: int = 64,
        sync_every: int = 500,
    ):
        self.encoder = encoder
        self.num_actions = num_actions
        self.online = Mlp([encoder.dim, *hidden, num_actions], rng)
        self.target = self.online.copy()
        self.adam = AdamState.for_params(self.online.params, lr=lr)
        self.gamma = gamma
        self.batch_size = batch_size
        self.sync_every = sync_every
        width = len(encoder.pack(_probe_state(encoder)))
        self.replay = ReplayBuffer(capacity, width)
        self.updates = 0

    def values(self, states) -> np.ndarray:
        """Online-network Q-values for raw (or augmented) states."""
        return self.online(self.encoder(pack_states(self.encoder, states)))

    def remember(self, s, a, r, s2, terminated) -> None:
        self.replay.add(self.encoder.pack(s), a, r, self.encoder.pack(s2), terminated)


class NetQ:
    """A frozen network Q-function, e.g. restored from a checkpoint."""

    def __init__(self, net: Mlp, encoder):
        self.net = net
        self.encoder = encoder
        self.num_actions = net.layer_sizes[-1]

    def values(self, states) -> np.ndarray:
        return self.net(self.encoder(pack_states(self.encoder, states)))


def pack_states(encoder, states) -> np.ndarray:
    if isinstance(states, AugmentedState):
        states = [states]
    if isinstance(encoder, AugmentedEncoder):
        return np.array([encoder.pack(I) for I in states])
    if isinstance(encoder, OneHotEncoder):
        return np.asarray(states, dtype=np.float64).reshape(-1, 1)
    return np.atleast_2d(np.asarray(states, dtype=np.float64))


def _probe_state(encoder):
    if isinstance(encoder, AugmentedEncoder):
        base = np.zeros(encoder.base.dim) if isinstance(encoder.base, BoxEncoder) else 0
        return AugmentedState(base, (0,) * encoder.d)
    if isinstance(encoder, BoxEncoder):
        return np.zeros(encoder.dim)
    return 0


def ddqn_target(agent: DqnAgent, r, s2_feat, term) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)), masked at termination."""
    best = np.argmax(agent.online(s2_feat), axis=1)
    q_next = agent.target(s2_feat)[np.arange(len(best)), best]
    return r + agent.gamma * (1.0 - term) * q_next


def ddqn_update(agent: DqnAgent, batch) -> float:
    """One Adam step on the mean squared double-Q error; returns the pre-step loss."""
    s, a, r, s2, term = batch
    if len(a) == 0:
        raise ValueError("empty batch")
    s_feat, s2_feat = agent.encoder(s), agent.encoder(s2)
    y = ddqn_target(agent, r, s2_feat, term)
    cache = agent.online.forward_cached(s_feat)
    q = cache[0][-1]
    idx = np.arange(len(a))
    err = q[idx, a] - y
    loss = float(np.mean(err**2))
    g = np.zeros_like(q)
    g[idx, a] = 2.0 * err / len(a)
    adam_step(agent.adam, agent.online.params, agent.online.backward(s_feat, g, cache))
    agent.updates += 1
    if agent.sync_every and agent.updates % agent.sync_every == 0:
        sync_target(agent)
    return loss


def sync_target(agent: DqnAgent) -> DqnAgent:
    agent.target.load_from(agent.online)
    return agent


def epsilon_greedy(q_values, eps: float, rng: np.random.Generator) -> int:
    """Uniform action w.p. ``eps``, else the lowest-index argmax."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    q_values = np.asarray(q_values)
    if rng.random() < eps:
        return int(rng.integers(len(q_values)))
    return argmax_lowest(q_values)
