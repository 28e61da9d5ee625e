import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smbs.delay import AugmentedState, DelayedEnv, EpisodeFinished, constant_action, wrap
from smbs.envs import Cliff, as_tabular, cliff_new, frozen_lake_new, make_env

RIGHT_LAKE = 2


def test_d0_is_raw_state():
    denv = wrap(frozen_lake_new(4, 0.0, seed=0), 0)
    I = denv.reset()
    assert I == AugmentedState(0, ())
    I, rew, done = denv.step(RIGHT_LAKE)
    assert I.base_state == 1 and I.action_queue == () and rew == 0.0 and not done


def test_constant_queue_init():
    denv = wrap(frozen_lake_new(4, 0.1, seed=0), 3, constant_action(0), seed=0)
    assert denv.reset().action_queue == (0, 0, 0)


def test_hidden_state_runs_ahead():
    denv = wrap(frozen_lake_new(4, 0.0, seed=0), 2, constant_action(RIGHT_LAKE))
    I = denv.reset()
    assert I.base_state == 0 and denv.hidden_state == 2


def test_queue_mechanics_d1():
    denv = wrap(frozen_lake_new(4, 0.0, seed=0), 1, constant_action(RIGHT_LAKE))
    denv.reset()
    assert denv.drain_transitions() == []
    I, _, _ = denv.step(1)
    assert I.action_queue == (1,)
    (rec,) = denv.drain_transitions()
    assert (rec.s, rec.a, rec.s_next) == (0, RIGHT_LAKE, 1)


def test_cliff_rewards_shift_by_delay():
    rng = np.random.default_rng(4)
    actions = [int(a) for a in rng.integers(4, size=10)]
    denv = DelayedEnv(cliff_new(0.2, seed=9), 2, seed=1)
    denv.reset()
    primes = [rec.a for rec in denv._records] or [p[1] for p in denv._pending]
    delayed = []
    for a in actions:
        _, rew, done = denv.step(a)
        delayed.append(rew)
        assert not done
    raw_env = cliff_new(0.2, seed=9)
    raw_env.reset()
    raw = [raw_env.step(a).reward for a in primes + actions]
    assert delayed == raw[:10]


@given(st.integers(0, 2**31 - 1), st.integers(0, 4), st.integers(1, 60))
def test_record_count_and_true_model(seed, d, k):
    env = frozen_lake_new(4, 0.15, seed=seed)
    P = as_tabular(env).dense()
    denv = DelayedEnv(env, d, seed=seed)
    denv.reset()
    rng = np.random.default_rng(seed)
    n = 0
    for _ in range(k):
        denv.step(int(rng.integers(4)))
        recs = denv.drain_transitions()
        n += len(recs)
        for rec in recs:
            assert P[rec.s, rec.a, rec.s_next] > 0
    assert n == k


@given(st.integers(0, 2**31 - 1), st.integers(0, 4))
def test_every_action_recorded_once(seed, d):
    """Submitted actions (priming included) reappear in order, once each."""
    denv = DelayedEnv(Cliff(0.2, seed=seed, max_episode_steps=50), d, seed=seed)
    denv.reset()
    submitted = [p[1] for p in denv._pending]
    rng = np.random.default_rng(seed)
    ret, raw_ret, done = 0.0, 0.0, False
    while not done:
        a = int(rng.integers(4))
        submitted.append(a)
        _, rew, done = denv.step(a)
        ret += rew
    recs = denv.drain_transitions()
    assert [r.a for r in recs] == submitted
    assert ret == pytest.approx(sum(r.reward for r in recs))
    assert denv.env_steps == len(submitted)
    with pytest.raises(EpisodeFinished):
        denv.step(0)


@given(st.integers(0, 2**31 - 1), st.integers(0, 5))
def test_alignment_on_deterministic_env(seed, d):
    env = frozen_lake_new(8, 0.0, seed=seed)
    P = as_tabular(env).dense()
    denv = DelayedEnv(env, d, seed=seed)
    I = denv.reset()
    rng = np.random.default_rng(seed)
    for _ in range(30):
        s = I.base_state
        for a in I.action_queue:
            s = int(np.argmax(P[s, a]))
        assert s == denv.hidden_state
        assert len(I.action_queue) == d and all(0 <= a < 4 for a in I.action_queue)
        I, _, _ = denv.step(int(rng.integers(4)))


@pytest.mark.parametrize("name", ["cartpole", "frozen_lake4", "puddle_world"])
def test_d0_transparency(name):
    raw = make_env(name, 0.1, seed=3)
    delayed = DelayedEnv(make_env(name, 0.1, seed=3), 0)
    s = raw.reset()
    I = delayed.reset()
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert np.array_equal(I.base_state, s)
        a = int(rng.integers(raw.spec.action_count))
        obs = raw.step(a)
        I, rew, done = delayed.step(a)
        assert rew == obs.reward and done == obs.done
        s = obs.state
        if done:
            s, I = raw.reset(), delayed.reset()


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        DelayedEnv(cliff_new(0.0), -1)


def test_termination_reported_immediately():
    env = cliff_new(0.0, seed=0)
    denv = DelayedEnv(env, 1, constant_action(0))
    denv.reset()
    # up primed; walk right 11 then down reaches the goal
    for a in [1] * 11:
        assert not denv.step(a)[2]
    _, rew, done = denv.step(2)
    assert done and denv.last_terminated
    recs = denv.drain_transitions()
    assert len(recs) == 1 + 12 and recs[-1].terminated
