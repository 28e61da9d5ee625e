"""Probabilistic one-step dynamics models and d-step rollouts through them.

Discrete models keep a ``(S, A, S)`` probability table plus its row-wise
CDF for vectorised sampling.  The Gaussian model predicts per-dimension
state deltas, a log standard deviation and a termination logit.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from smbs.delay import TransitionRecord
from smbs.mdp import TabularMdp
from smbs.nn import AdamState, Mlp, adam_step

log = logging.getLogger(__name__)


class UnseenPairError(LookupError):
    """A tabular model has no mass at the requested (state, action)."""


class StateKindError(TypeError):
    """Transition records do not match the model's state representation."""


class DiscreteModel:
    discrete = True

    def __init__(self, num_states: int, num_actions: int):
        self.num_states = num_states
        self.num_actions = num_actions
        self._probs = np.full((num_states, num_actions, num_states), 1.0 / num_states)
        self._cdf = np.cumsum(self._probs, axis=2)
        self._cdf[:, :, -1] = 1.0
        self.seen = np.zeros((num_states, num_actions), dtype=bool)
        self.terminal = np.zeros(num_states, dtype=bool)
        self.fallbacks = 0

    def _set_row(self, s: int, a: int, row: np.ndarray) -> None:
        self._probs[s, a] = row
        cdf = np.cumsum(row)
        cdf[-1] = 1.0
        self._cdf[s, a] = cdf

    def probs(self, s: int, a: int) -> np.ndarray:
        if not self.seen[s, a]:
            raise UnseenPairError(f"no transition mass at (s={s}, a={a})")
        return self._probs[s, a].copy()

    def probability_table(self) -> np.ndarray:
        return self._probs.copy()

    def sample_next(self, s: int, a: int, rng: np.random.Generator) -> tuple[int, bool]:
        if not self.seen[s, a]:
            raise UnseenPairError(f"no transition mass at (s={s}, a={a})")
        nxt = int(np.argmax(self._cdf[s, a] > rng.random()))
        return nxt, bool(self.terminal[nxt])

    def mode_next(self, s: int, a: int) -> int:
        if not self.seen[s, a]:
            raise UnseenPairError(f"no transition mass at (s={s}, a={a})")
        return int(np.argmax(self._probs[s, a]))

    def sample_batch(self, states: np.ndarray, a: int, rng: np.random.Generator):
        """Vectorised draw; unseen pairs fall back to uniform over states."""
        unseen = ~self.seen[states, a]
        if unseen.any():
            self.fallbacks += int(unseen.sum())
            log.debug("uniform fallback for %d unseen (state, action=%d) draws", unseen.sum(), a)
        u = rng.random(len(states))
        nxt = np.argmax(self._cdf[states, a] > u[:, None], axis=1)
        return nxt, self.terminal[nxt]

    def mode_batch(self, states: np.ndarray, a: int):
        nxt = np.argmax(self._probs[states, a], axis=1)
        return nxt, self.terminal[nxt]


class TabularModel(DiscreteModel):
    """Frequency model: P(s'|s,a) = (N + eps) / sum(N + eps)."""

    def __init__(self, num_states: int, num_actions: int, smoothing: float = 0.0):
        if smoothing < 0:
            raise ValueError("smoothing must be nonnegative")
        super().__init__(num_states, num_actions)
        self.smoothing = float(smoothing)
        self.counts = np.zeros((num_states, num_actions, num_states), dtype=np.int64)
        if self.smoothing > 0:
            self.seen[:] = True

    def _refresh(self, s: int, a: int) -> None:
        row = self.counts[s, a] + self.smoothing
        total = row.sum()
        if total > 0:
            self._set_row(s, a, row / total)
            self.seen[s, a] = True

    def observe(self, s: int, a: int, s_next: int, terminated: bool = False) -> None:
        self.counts[s, a, s_next] += 1
        if terminated:
            self.terminal[s_next] = True
        self._refresh(s, a)

    def fit_update(self, batch: Sequence[TransitionRecord]) -> None:
        for rec in batch:
            if isinstance(rec.s, np.ndarray) or isinstance(rec.s_next, np.ndarray):
                raise StateKindError("tabular model needs integer states")
            self.observe(int(rec.s), int(rec.a), int(rec.s_next), rec.terminated)

    def dumps(self) -> str:
        lines = [f"counts {self.num_states} {self.num_actions} {self.smoothing!r}"]
        for s in range(self.num_states):
            for a in range(self.num_actions):
                lines.append(" ".join(str(int(c)) for c in self.counts[s, a]))
        lines.append("terminal " + " ".join(str(int(t)) for t in self.terminal))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TabularModel":
        lines = text.strip().splitlines()
        tag, S, A, eps = lines[0].split()
        if tag != "counts":
            raise ValueError("not a counts document")
        S, A = int(S), int(A)
        model = cls(S, A, float(eps))
        for i, line in enumerate(lines[1 : 1 + S * A]):
            s, a = divmod(i, A)
            model.counts[s, a] = [int(x) for x in line.split()]
            model._refresh(s, a)
        model.terminal[:] = [bool(int(x)) for x in lines[1 + S * A].split()[1:]]
        return model


class MdpModel(DiscreteModel):
    """The exact dynamics of a known TabularMdp behind the model interface."""

    def __init__(self, mdp: TabularMdp):
        super().__init__(mdp.num_states, mdp.num_actions)
        P = mdp.dense()
        for s in range(mdp.num_states):
            for a in range(mdp.num_actions):
                self._set_row(s, a, P[s, a])
        self.seen[:] = True
        self.terminal[:] = mdp.terminal


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class GaussianDynamicsModel:
    """Diagonal-Gaussian next-state model over normalised state deltas.

    The network maps ``normalised state ++ one_hot(action)`` to
    ``(mean delta, raw log-std, termination logit)``.  The log-std is squashed
    into ``logstd_bounds`` with a sigmoid; equal bounds pin it to a constant.
    """

    discrete = False

    def __init__(
        self,
        state_dim: int,
        num_actions: int,
        low,
        high,
        hidden: Sequence[int] = (64, 64),
        lr: float = 1e-3,
        logstd_bounds: tuple[float, float] = (-5.0, 2.0),
        rng: np.random.Generator | None = None,
    ):
        self.state_dim = state_dim
        self.num_actions = num_actions
        low, high = np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64)
        self.center = (low + high) / 2.0
        self.scale = (high - low) / 2.0
        self.logstd_bounds = tuple(float(b) for b in logstd_bounds)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.net = Mlp([state_dim + num_actions, *hidden, 2 * state_dim + 1], rng)
        self.adam = AdamState.for_params(self.net.params, lr=lr)

    def _inputs(self, states: np.ndarray, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        onehot = np.zeros((len(states), self.num_actions))
        onehot[np.arange(len(states)), actions] = 1.0
        return np.hstack([(states - self.center) / self.scale, onehot])

    def _split(self, out: np.ndarray):
        D = self.state_dim
        lo, hi = self.logstd_bounds
        mean = out[:, :D]
        raw = out[:, D : 2 * D]
        if lo == hi:
            logstd = np.full_like(raw, lo)
        else:
            logstd = lo + (hi - lo) * _sigmoid(raw)
        return mean, raw, logstd, out[:, 2 * D]

    def predict(self, states, actions):
        """Mean next state, std (in state units) and termination probability."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        mean, _, logstd, logit = self._split(self.net(self._inputs(states, actions)))
        return states + mean * self.scale, np.exp(logstd) * self.scale, _sigmoid(logit)

    def loss_and_grads(self, batch: Sequence[TransitionRecord]):
        s = np.array([r.s for r in batch], dtype=np.float64)
        s2 = np.array([r.s_next for r in batch], dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != self.state_dim:
            raise StateKindError(f"expected {self.state_dim}-dim vector states")
        a = np.array([r.a for r in batch], dtype=np.int64)
        term = np.array([r.terminated for r in batch], dtype=np.float64)
        return self._loss_and_grads(s, a, s2, term)

    def _loss_and_grads(self, s, a, s2, term):
        x = self._inputs(s, a)
        cache = self.net.forward_cached(x)
        out = cache[0][-1]
        mean, raw, logstd, logit = self._split(out)
        target = (s2 - s) / self.scale
        n = len(s)
        inv_var = np.exp(-2.0 * logstd)
        err = target - mean
        p = _sigmoid(logit)
        nll = 0.5 * err**2 * inv_var + logstd + 0.5 * np.log(2 * np.pi)
        eps = 1e-12
        bce = -(term * np.log(p + eps) + (1 - term) * np.log(1 - p + eps))
        loss = float((nll.sum(axis=1) + bce).mean())

        D = self.state_dim
        g = np.zeros_like(out)
        g[:, :D] = -err * inv_var / n
        lo, hi = self.logstd_bounds
        if lo != hi:
            sig = _sigmoid(raw)
            g[:, D : 2 * D] = (1.0 - err**2 * inv_var) * (hi - lo) * sig * (1 - sig) / n
        g[:, 2 * D] = (p - term) / n
        return loss, self.net.backward(x, g, cache)

    def fit_update(self, batch: Sequence[TransitionRecord]) -> float:
        """One Adam step on the batch NLL; returns the pre-step loss."""
        loss, grads = self.loss_and_grads(batch)
        adam_step(self.adam, self.net.params, grads)
        return loss

    def fit_arrays(self, s, a, s2, term) -> float:
        loss, grads = self._loss_and_grads(s, a, s2, term)
        adam_step(self.adam, self.net.params, grads)
        return loss

    def nll(self, batch: Sequence[TransitionRecord]) -> float:
        return self.loss_and_grads(batch)[0]

    def sample_next(self, s, a: int, rng: np.random.Generator):
        nxt, term = self.sample_batch(np.atleast_2d(s), a, rng)
        return nxt[0], bool(term[0])

    def mode_next(self, s, a: int) -> np.ndarray:
        return self.predict(s, [a])[0][0]

    def sample_batch(self, states: np.ndarray, a: int, rng: np.random.Generator):
        mean, std, p_term = self.predict(states, np.full(len(states), a))
        noise = rng.standard_normal(mean.shape)
        u = rng.random(len(states))
        return mean + std * noise, u < p_term

    def mode_batch(self, states: np.ndarray, a: int):
        mean, _, p_term = self.predict(states, np.full(len(states), a))
        return mean, p_term > 0.5


def fit_update(model, batch: Sequence[TransitionRecord]):
    return model.fit_update(batch)


def sample_next(model, s, a: int, rng: np.random.Generator):
    return model.sample_next(s, a, rng)


def mode_next(model, s, a: int):
    return model.mode_next(s, a)


def rollout_batch(model, s, actions: Sequence[int], m: int, rng: np.random.Generator):
    """``m`` independent d-step sampled rollouts from ``s``.

    Returns the final states and a terminal mask; a rollout that terminates
    stays frozen at the state where it ended.
    """
    if model.discrete:
        cur = np.full(m, int(s), dtype=np.int64)
    else:
        cur = np.tile(np.asarray(s, dtype=np.float64), (m, 1))
    done = np.zeros(m, dtype=bool)
    for a in actions:
        nxt, term = model.sample_batch(cur, int(a), rng)
        if done.any():
            nxt = np.where(done[:, None], cur, nxt) if nxt.ndim == 2 else np.where(done, cur, nxt)
        done = done | term
        cur = nxt
    return cur, done


def rollout_sample(model, s, actions: Sequence[int], rng: np.random.Generator):
    """Single sampled estimate of the target state and its terminal flag."""
    states, done = rollout_batch(model, s, actions, 1, rng)
    return states[0], bool(done[0])


def rollout_mode(model, s, actions: Sequence[int]):
    """Most-likely-successor chain; stops early if the mode step terminates."""
    if model.discrete:
        cur = np.array([int(s)], dtype=np.int64)
    else:
        cur = np.atleast_2d(np.asarray(s, dtype=np.float64))
    for a in actions:
        cur, term = model.mode_batch(cur, int(a))
        if term[0]:
            return cur[0], True
    return cur[0], False
