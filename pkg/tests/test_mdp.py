import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_mdp
from smbs.mdp import (
    ConvergenceError,
    StateCapError,
    TabularMdp,
    bellman_backup,
    build_amdp,
    decode_augmented,
    dumps,
    encode_augmented,
    greedy_policy,
    loads,
    target_state_distribution,
    validate,
    value_iteration,
    ValueSolution,
)

mdps = st.builds(random_mdp, st.integers(1, 5), st.integers(1, 3), st.integers(0, 10**6))


def test_validate_well_formed(chain_mdp):
    assert validate(chain_mdp) == []


def test_validate_row_sum_violation():
    P = np.array([[[0.5, 0.6], [1.0, 0.0]], [[0.0, 1.0], [0.0, 1.0]]])
    problems = validate(TabularMdp(P, np.zeros((2, 2)), np.array([1.0, 0.0]), 0.9))
    assert len(problems) == 1 and "sums to" in problems[0]


def test_validate_terminal_reward():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    mdp = TabularMdp(P, np.array([[0.0], [1.0]]), np.array([1.0, 0.0]), 0.9, np.array([False, True]))
    problems = validate(mdp)
    assert len(problems) == 1 and "nonzero reward" in problems[0]


def test_single_state_geometric_series():
    mdp = TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), np.ones(1), 0.9)
    sol = value_iteration(mdp, tol=1e-10)
    assert sol.q_star[0, 0] == pytest.approx(10.0, abs=1e-8)


def test_chain_hand_solution(chain_mdp):
    # q(s1) = 1 + 0.5 q(s1) -> 2 ; q(s0) = 0 + 0.5 q(s1) -> 1
    sol = value_iteration(chain_mdp, tol=1e-12)
    assert sol.q_star[:, 0] == pytest.approx([1.0, 2.0], abs=1e-11)
    assert list(greedy_policy(sol)) == [0, 0]


def test_iteration_cap_is_reported():
    mdp = random_mdp(4, 2, 0, discount=0.999)
    with pytest.raises(ConvergenceError):
        value_iteration(mdp, tol=1e-12, max_iter=5)


def test_greedy_tie_breaks_low():
    sol = ValueSolution(np.zeros(2), np.array([[0.0, 5.0, 3.0], [5.0, 5.0, 3.0]]), 0, 0.0)
    assert list(greedy_policy(sol)) == [1, 0]


@given(mdps)
def test_value_iteration_residual_and_v(mdp):
    sol = value_iteration(mdp, tol=1e-10)
    assert sol.residual <= 1e-10
    assert np.max(np.abs(bellman_backup(mdp, sol.q_star) - sol.q_star)) <= 1e-10
    assert np.array_equal(sol.v_star, sol.q_star.max(axis=1))


@given(mdps)
def test_value_iteration_tolerance_monotone(mdp):
    tol = 1e-6
    a = value_iteration(mdp, tol=tol).q_star
    b = value_iteration(mdp, tol=tol / 10).q_star
    # a tol-residual iterate is within tol*gamma/(1-gamma) of q*; same for b
    bound = tol * mdp.discount / (1 - mdp.discount) * 1.1 + tol
    assert np.max(np.abs(a - b)) <= bound


@given(mdps, st.integers(0, 3))
def test_amdp_rows_stochastic(mdp, d):
    amdp = build_amdp(mdp, d)
    assert amdp.num_states == mdp.num_states * mdp.num_actions**d
    sums = np.asarray(amdp.matrix().sum(axis=1)).ravel()
    assert np.all(np.abs(sums - 1.0) <= 1e-9)
    assert validate(amdp) == []


@given(mdps)
def test_amdp_d0_matches_base(mdp):
    tol = 1e-10
    base = value_iteration(mdp, tol=tol).q_star
    aug = value_iteration(build_amdp(mdp, 0), tol=tol).q_star
    assert np.allclose(base, aug, atol=2 * tol * 10)


def test_amdp_small_counts():
    amdp = build_amdp(random_mdp(2, 2, 3), 2)
    assert amdp.num_states == 8


def test_amdp_three_state_chain_table():
    # deterministic chain 0 -> 1 -> 2 -> 2 under action 0, action 1 stays put
    P = np.zeros((3, 2, 3))
    for s, nxt in enumerate([1, 2, 2]):
        P[s, 0, nxt] = 1.0
        P[s, 1, s] = 1.0
    reward = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    amdp = build_amdp(TabularMdp(P, reward, np.array([1.0, 0, 0]), 0.9), 1)
    expected = {
        # (s, queued) , new action -> (s', queue'), reward r(s, queued)
        ((0, 0), 0): ((1, 0), 1.0),
        ((0, 0), 1): ((1, 1), 1.0),
        ((0, 1), 0): ((0, 0), 0.0),
        ((0, 1), 1): ((0, 1), 0.0),
        ((1, 0), 0): ((2, 0), 2.0),
        ((1, 0), 1): ((2, 1), 2.0),
        ((1, 1), 0): ((1, 0), 0.0),
        ((1, 1), 1): ((1, 1), 0.0),
        ((2, 0), 0): ((2, 0), 3.0),
        ((2, 0), 1): ((2, 1), 3.0),
        ((2, 1), 0): ((2, 0), 0.0),
        ((2, 1), 1): ((2, 1), 0.0),
    }
    dense = amdp.dense()
    for ((s, q), a), ((s2, q2), r) in expected.items():
        i, j = encode_augmented(s, (q,), 2), encode_augmented(s2, (q2,), 2)
        assert dense[i, a, j] == 1.0
        assert amdp.reward[i, a] == r
    assert np.allclose(amdp.initial_dist, [0.5, 0.5, 0, 0, 0, 0])


@given(st.integers(0, 10**6), st.integers(1, 3))
def test_deterministic_augmented_q_unrolls(seed, d):
    mdp = random_mdp(4, 2, seed, discount=0.8, deterministic=True)
    P = mdp.dense()
    tol = 1e-12
    q = value_iteration(mdp, tol=tol).q_star
    q_aug = value_iteration(build_amdp(mdp, d), tol=tol).q_star
    rng = np.random.default_rng(seed)
    for _ in range(5):
        s0 = int(rng.integers(4))
        queue = tuple(int(a) for a in rng.integers(2, size=d))
        s, total = s0, 0.0
        for j, a in enumerate(queue):
            total += mdp.discount**j * mdp.reward[s, a]
            s = int(np.argmax(P[s, a]))
        for a in range(2):
            want = total + mdp.discount**d * q[s, a]
            assert q_aug[encode_augmented(s0, queue, 2), a] == pytest.approx(want, abs=1e-9)


def test_amdp_state_cap():
    with pytest.raises(StateCapError):
        build_amdp(random_mdp(10, 4, 0), 6, max_states=1000)


@given(st.integers(0, 50), st.lists(st.integers(0, 3), max_size=5))
def test_encode_decode_roundtrip(s, queue):
    code = encode_augmented(s, queue, 4)
    assert decode_augmented(code, len(queue), 4) == (s, tuple(queue))


def test_target_distribution_is_chained_matrix_product():
    mdp = random_mdp(5, 2, 9)
    P = mdp.dense()
    dist = target_state_distribution(mdp, 3, (1, 0))
    assert np.allclose(dist, P[3, 1] @ P[:, 0, :])


@given(mdps)
def test_text_roundtrip_exact(mdp):
    back = loads(dumps(mdp))
    assert np.array_equal(back.dense(), mdp.dense())
    assert np.array_equal(back.reward, mdp.reward)
    assert np.array_equal(back.initial_dist, mdp.initial_dist)
    assert back.discount == mdp.discount
    assert dumps(mdp).startswith(f"mdp {mdp.num_states} {mdp.num_actions} ")
