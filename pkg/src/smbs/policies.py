"""Delayed-control decision rules over an augmented state.

* ``smbs_select`` - sample target states through a probabilistic model and
  pick argmax of mean - alpha * std of the sampled Q-values.
* ``delayed_q_select`` - act greedily on the most-likely target state.
* ``amdp_select`` - act greedily on a Q-function over augmented states.
* ``exact_expected_q_select`` - the infinite-sample limit of ``smbs_select``
  computed from the exact target-state law of a tabular MDP.

All four break ties toward the lowest action index (optionally treating
values within ``tie_tol`` of the maximum as tied).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from smbs.delay import AugmentedState
from smbs.mdp import TabularMdp, argmax_lowest, target_state_distribution
from smbs.models import rollout_batch, rollout_mode

DEFAULT_M = 50
DEFAULT_ALPHA = 0.01
PRESET_M_LARGE_TASKS = 20


@dataclass
class RiskStats:
    mean: np.ndarray
    std: np.ndarray
    m: int

    def scores(self, alpha: float) -> np.ndarray:
        return self.mean - alpha * self.std


@dataclass
class DecisionTrace:
    policy: str
    action: int
    stats: RiskStats
    state: AugmentedState | None = None
    samples: np.ndarray | None = None
    terminal: np.ndarray | None = None
    alpha: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_line(self) -> str:
        """One JSON object per decision, for audit logs."""
        I = self.state
        base = None
        if I is not None:
            b = I.base_state
            base = b.tolist() if isinstance(b, np.ndarray) else int(b)
        return json.dumps(
            {
                "policy": self.policy,
                "base_state": base,
                "queue": list(I.action_queue) if I is not None else None,
                "mean": [float(x) for x in self.stats.mean],
                "std": [float(x) for x in self.stats.std],
                "m": self.stats.m,
                "alpha": self.alpha,
                "action": self.action,
            },
            sort_keys=True,
        )


def risk_stats(samples) -> RiskStats:
    """Per-action sample mean and (M-1)-denominator std of an ``(M, A)`` array.

    With a single sample the std is defined as 0.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("need an (M, A) array with M >= 1")
    m = samples.shape[0]
    # deviations from the first draw keep constant columns at exactly zero spread
    dev = samples - samples[0]
    mean_dev = dev.mean(axis=0)
    mean = samples[0] + mean_dev
    if m == 1:
        std = np.zeros_like(mean)
    else:
        std = np.sqrt(((dev - mean_dev) ** 2).sum(axis=0) / (m - 1))
    return RiskStats(mean=mean, std=std, m=m)


def _q_on_targets(q, states, terminal) -> np.ndarray:
    vals = np.array(q.values(states), dtype=np.float64)
    if terminal is not None and terminal.any():
        vals[terminal] = 0.0
    return vals


def smbs_select(
    q,
    model,
    I: AugmentedState,
    m: int = DEFAULT_M,
    alpha: float = DEFAULT_ALPHA,
    rng: np.random.Generator | None = None,
    retain_samples: bool = False,
    tie_tol: float = 0.0,
):
    if m < 1:
        raise ValueError("M must be at least 1")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if rng is None:
        rng = np.random.default_rng()
    states, terminal = rollout_batch(model, I.base_state, I.action_queue, m, rng)
    stats = risk_stats(_q_on_targets(q, states, terminal))
    action = argmax_lowest(stats.scores(alpha), tie_tol)
    trace = DecisionTrace(
        "smbs",
        action,
        stats,
        state=I,
        samples=states if retain_samples else None,
        terminal=terminal if retain_samples else None,
        alpha=alpha,
    )
    return action, trace


def delayed_q_select(q, model, I: AugmentedState, tie_tol: float = 0.0):
    target, terminal = rollout_mode(model, I.base_state, I.action_queue)
    vals = _q_on_targets(q, np.asarray([target]), np.array([terminal]))[0]
    action = argmax_lowest(vals, tie_tol)
    stats = RiskStats(vals, np.zeros_like(vals), 1)
    return action, DecisionTrace("delayed_q", action, stats, state=I, extra={"target": target})


def amdp_select(q_aug, I: AugmentedState, tie_tol: float = 0.0):
    vals = np.asarray(q_aug.values([I]), dtype=np.float64)[0]
    action = argmax_lowest(vals, tie_tol)
    stats = RiskStats(vals, np.zeros_like(vals), 1)
    return action, DecisionTrace("amdp", action, stats, state=I)


def exact_expected_q_select(q, mdp: TabularMdp, I: AugmentedState, alpha: float = 0.0, tie_tol: float = 0.0):
    """argmax of E[q(s_t, a) | I] - alpha * SD[q(s_t, a) | I] under the exact law."""
    dist = target_state_distribution(mdp, I.base_state, I.action_queue)
    support = np.flatnonzero(dist)
    vals = _q_on_targets(q, support, mdp.terminal[support])
    w = dist[support]
    mean = w @ vals
    sd = np.sqrt(np.maximum(w @ (vals - mean) ** 2, 0.0))
    action = argmax_lowest(mean - alpha * sd, tie_tol)
    return action, DecisionTrace("expected_q", action, RiskStats(mean, sd, 0), state=I, alpha=alpha)
