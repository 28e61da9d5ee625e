"""Mechanical checks of the two optimality results on small tabular MDPs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from smbs.delay import AugmentedState
from smbs.mdp import (
    TabularMdp,
    build_amdp,
    decode_augmented,
    is_deterministic,
    target_state_distribution,
    value_iteration,
)
from smbs.models import MdpModel
from smbs.policies import smbs_select
from smbs.qlearn import AugmentedTabularQ, TabularQ

__all__ = [
    "Theorem1Report",
    "Theorem2Report",
    "target_state_distribution",
    "reachable_augmented_states",
    "verify_theorem1",
    "verify_theorem2",
    "exact_q_moments",
]


class DeterminismError(ValueError):
    pass


class PositiveRewardError(ValueError):
    pass


@dataclass
class Theorem1Report:
    d: int
    m: int
    alpha: float
    checked: int
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


@dataclass
class Theorem2Report:
    delta: float
    m: int
    trials: int
    frequency: float
    bound: float
    expected_v: float
    q_std: np.ndarray
    q_mean: np.ndarray
    threshold: float
    reward_shift: float = 0.0
    deviation_frequency: float = 0.0

    @property
    def binomial_stderr(self) -> float:
        p = min(self.bound, 1.0)
        return float(np.sqrt(p * (1.0 - p) / self.trials))

    @property
    def within_bound(self) -> bool:
        return self.frequency <= self.bound + 3.0 * self.binomial_stderr


def reachable_augmented_states(amdp: TabularMdp) -> np.ndarray:
    """Breadth-first closure of the initial support under every action."""
    P = amdp.matrix().tocsr()
    A = amdp.num_actions
    seen = np.zeros(amdp.num_states, dtype=bool)
    frontier = deque(np.flatnonzero(amdp.initial_dist > 0))
    seen[list(frontier)] = True
    while frontier:
        i = frontier.popleft()
        for a in range(A):
            row = i * A + a
            for j in P.indices[P.indptr[row] : P.indptr[row + 1]]:
                if not seen[j]:
                    seen[j] = True
                    frontier.append(j)
    return np.flatnonzero(seen)


def verify_theorem1(
    mdp: TabularMdp,
    d: int,
    m: int = 50,
    alpha: float = 0.01,
    seed: int = 0,
    tol: float = 1e-11,
    tie_tol: float = 0.0,
    max_states: int = 10**6,
) -> Theorem1Report:
    """Compare SMBS (exact q*, exact model) with argmax q~* on every reachable I.

    Both rules pick the lowest index among values within ``tie_tol`` of the
    maximum; a small positive ``tie_tol`` absorbs value-iteration round-off
    when two actions are mathematically equal.
    """
    if not is_deterministic(mdp):
        raise DeterminismError("theorem 1 needs deterministic transitions")
    A = mdp.num_actions
    base = value_iteration(mdp, tol=tol)
    amdp = build_amdp(mdp, d, max_states=max_states)
    aug = value_iteration(amdp, tol=tol)
    q = TabularQ(base.q_star)
    q_aug = AugmentedTabularQ(aug.q_star, A, d)
    model = MdpModel(mdp)
    rng = np.random.default_rng(seed)
    report = Theorem1Report(d=d, m=m, alpha=alpha, checked=0)
    for idx in reachable_augmented_states(amdp):
        s, queue = decode_augmented(int(idx), d, A)
        I = AugmentedState(s, queue)
        a_smbs, _ = smbs_select(q, model, I, m=m, alpha=alpha, rng=rng, tie_tol=tie_tol)
        vals = q_aug.values([I])[0]
        a_opt = int(np.flatnonzero(vals >= vals.max() - tie_tol)[0])
        report.checked += 1
        if a_smbs != a_opt:
            report.mismatches.append((s, queue, a_smbs, a_opt))
    return report


def exact_q_moments(mdp: TabularMdp, q_star: np.ndarray, I: AugmentedState):
    """Population mean and std of q*(s_t, a) given I, per action."""
    dist = target_state_distribution(mdp, I.base_state, I.action_queue)
    mean = dist @ q_star
    var = dist @ (q_star - mean) ** 2
    return dist, mean, np.sqrt(np.maximum(var, 0.0))


def verify_theorem2(
    mdp: TabularMdp,
    I: AugmentedState,
    delta: float,
    m: int,
    trials: int,
    rng: np.random.Generator,
    reward_shift: float = 0.0,
    tol: float = 1e-10,
) -> Theorem2Report:
    """Monte-Carlo frequency of the low-value event against |A| / delta**2.

    The event is ``max_a Qbar_M(a) <= E[V*(s_t)|I] / |A| - delta / sqrt(M) *
    max_a sigma(a)`` where ``sigma(a)`` is the population std of
    ``q*(s_t, a)`` given ``I`` and ``Qbar_M`` averages ``M`` i.i.d. draws of
    the target state.
    """
    live = ~mdp.terminal
    if np.any(mdp.reward[live] <= 0):
        raise PositiveRewardError("theorem 2 needs strictly positive rewards; shift them first")
    if delta <= 0 or m < 1 or trials < 1:
        raise ValueError("delta, M and trials must be positive")
    sol = value_iteration(mdp, tol=tol)
    dist, q_mean, q_std = exact_q_moments(mdp, sol.q_star, I)
    expected_v = float(dist @ sol.v_star)
    A = mdp.num_actions
    threshold = expected_v / A - delta / np.sqrt(m) * q_std.max()
    draws = rng.choice(mdp.num_states, size=(trials, m), p=dist)
    q_bar = sol.q_star[draws].mean(axis=1)  # (trials, A)
    event = q_bar.max(axis=1) <= threshold
    # the union-bound event the low-value event is contained in
    deviation = np.abs(q_bar - q_mean).max(axis=1) > delta / np.sqrt(m) * q_std.max()
    return Theorem2Report(
        delta=float(delta),
        m=m,
        trials=trials,
        frequency=float(event.mean()),
        bound=A / delta**2,
        expected_v=expected_v,
        q_std=q_std,
        q_mean=q_mean,
        threshold=float(threshold),
        reward_shift=reward_shift,
        deviation_frequency=float(deviation.mean()),
    )
