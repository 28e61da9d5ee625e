import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_mdp
from smbs.delay import AugmentedState
from smbs.envs import as_tabular, cliff_new, frozen_lake_new
from smbs.mdp import build_amdp, shift_rewards, target_state_distribution
from smbs.theory import (
    DeterminismError,
    PositiveRewardError,
    reachable_augmented_states,
    verify_theorem1,
    verify_theorem2,
)


def test_distribution_d0_point_mass():
    mdp = as_tabular(frozen_lake_new(4, 0.1))
    assert np.array_equal(target_state_distribution(mdp, 5, ()), np.eye(16)[5])


def test_distribution_deterministic_two_steps():
    mdp = as_tabular(frozen_lake_new(4, 0.0))
    # right then down from start: 0 -> 1 -> 5 (a hole, which sends the walker back to 0)
    assert np.array_equal(target_state_distribution(mdp, 0, (2, 2)), np.eye(16)[2])
    assert np.array_equal(target_state_distribution(mdp, 0, (2, 1)), np.eye(16)[0])


def test_distribution_lake_by_hand():
    # from start, right: {1: .8, 0: .1 (bounce up), 4: .1}; then right again from each
    mdp = as_tabular(frozen_lake_new(4, 0.1))
    want = np.zeros(16)
    # from 1: right->2 .8, up->1 .1, down->5 (hole -> 0) .1
    want[2] += 0.8 * 0.8
    want[1] += 0.8 * 0.1
    want[0] += 0.8 * 0.1
    # from 0: right->1 .8, up->0 .1, down->4 .1
    want[1] += 0.1 * 0.8
    want[0] += 0.1 * 0.1
    want[4] += 0.1 * 0.1
    # from 4: right->5 (hole -> 0) .8, up->0 .1, down->8 .1
    want[0] += 0.1 * 0.8 + 0.1 * 0.1
    want[8] += 0.1 * 0.1
    got = target_state_distribution(mdp, 0, (2, 2))
    assert got == pytest.approx(want)
    assert np.count_nonzero(got) <= 9


@given(st.integers(0, 10**6), st.lists(st.integers(0, 2), max_size=4))
def test_distribution_sums_to_one(seed, queue):
    mdp = random_mdp(6, 3, seed)
    assert abs(target_state_distribution(mdp, seed % 6, queue).sum() - 1.0) <= 1e-9


@pytest.mark.parametrize("d", [1, 2, 3])
def test_theorem1_lake(d):
    rep = verify_theorem1(as_tabular(frozen_lake_new(4, 0.0)), d, m=5, alpha=0.01)
    assert rep.ok and rep.checked > 0


def test_theorem1_cliff():
    rep = verify_theorem1(as_tabular(cliff_new(0.0)), 2, m=50, alpha=1.0)
    assert rep.ok and rep.checked > 0


@given(st.integers(0, 10**6), st.integers(1, 2), st.sampled_from([1, 3]), st.sampled_from([0.0, 0.5]))
def test_theorem1_random_deterministic(seed, d, m, alpha):
    assert verify_theorem1(random_mdp(5, 3, seed, deterministic=True), d, m=m, alpha=alpha, seed=seed).ok


def test_theorem1_rejects_stochastic():
    with pytest.raises(DeterminismError):
        verify_theorem1(as_tabular(frozen_lake_new(4, 0.1)), 1)


def test_reachable_includes_every_initial_queue():
    amdp = build_amdp(as_tabular(frozen_lake_new(4, 0.0)), 2)
    reach = set(reachable_augmented_states(amdp))
    assert set(np.flatnonzero(amdp.initial_dist)) <= reach


def shifted_lake(r, shift=0.1):
    return shift_rewards(as_tabular(frozen_lake_new(4, r)), shift)


def test_theorem2_deterministic_never_fires():
    rep = verify_theorem2(shifted_lake(0.0), AugmentedState(0, (2, 1)), 2.0, 10, 2000, np.random.default_rng(0), 0.1)
    assert np.all(rep.q_std == 0) and rep.frequency == 0.0


@pytest.mark.parametrize("delta,bound", [(2.0, 1.0), (4.0, 0.25)])
def test_theorem2_lake_bound(delta, bound):
    rep = verify_theorem2(shifted_lake(0.15), AugmentedState(0, (2, 1)), delta, 10, 10_000, np.random.default_rng(1), 0.1)
    assert rep.bound == bound and 0.0 <= rep.frequency <= 1.0 and rep.within_bound
    assert rep.reward_shift == 0.1


def test_theorem2_large_delta():
    rep = verify_theorem2(shifted_lake(0.15), AugmentedState(6, (1, 2)), 1e6, 5, 1000, np.random.default_rng(2), 0.1)
    assert rep.frequency == 0.0


def test_theorem2_requires_positive_rewards():
    with pytest.raises(PositiveRewardError):
        verify_theorem2(as_tabular(frozen_lake_new(4, 0.15)), AugmentedState(0, (0, 0)), 2.0, 5, 10, np.random.default_rng(0))


@pytest.mark.parametrize("delta", [1.0, 2.0])
def test_theorem2_deviation_event_respects_union_bound(delta):
    rep = verify_theorem2(shifted_lake(0.15), AugmentedState(0, (2, 1)), delta, 5, 20_000, np.random.default_rng(3), 0.1)
    assert 0.0 < rep.deviation_frequency <= min(rep.bound, 1.0)
    assert rep.frequency <= rep.deviation_frequency
