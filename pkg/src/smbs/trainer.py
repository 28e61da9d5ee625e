"""Delayed-environment training loop, greedy evaluation and seed groups.

Samples are collected in the delayed environment with the configured
decision rule (wrapped in epsilon-greedy exploration).  Non-delayed
transitions recovered by the wrapper train the Q-function and the dynamics
model online; the AMDP baseline instead learns a Q-function directly over
augmented states.  The policy is frozen and evaluated periodically and the
best evaluation is kept as the run's checkpoint.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from smbs.delay import AugmentedState, DelayedEnv, constant_action, uniform_actions
from smbs.envs import Env, make_env
from smbs.models import GaussianDynamicsModel, TabularModel
from smbs.nn import Mlp
from smbs.policies import amdp_select, delayed_q_select, smbs_select
from smbs.qlearn import (
    AugmentedEncoder,
    BoxEncoder,
    DqnAgent,
    EpsilonSchedule,
    NetQ,
    OneHotEncoder,
    TabularQ,
    ddqn_update,
    tabular_q_update,
)

log = logging.getLogger(__name__)

METHODS = ("smbs", "delayed_q", "amdp")
Q_KINDS = ("ddqn", "tabular")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    env: str = "frozen_lake4"
    r: float = 0.0
    d: int = 0
    method: str = "smbs"
    q_kind: str = "ddqn"
    steps: int = 100_000
    m: int = 50
    alpha: float = 0.01
    seed: int = 0
    gamma: float = 0.99
    hidden: tuple = (64, 64)
    lr: float = 1e-3
    batch_size: int = 64
    replay_capacity: int = 50_000
    sync_every: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    warmup: int = 1000
    train_every: int = 1
    tabular_lr: float = 0.1
    model_smoothing: float = 0.0
    model_lr: float = 1e-3
    model_batch_size: int = 64
    logstd_bounds: tuple = (-5.0, 2.0)
    eval_every: int = 2000
    eval_steps: int = 2000
    final_eval_steps: int = 10_000
    queue_init: str = "uniform"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.logstd_bounds = tuple(float(b) for b in self.logstd_bounds)

    def validate(self) -> None:
        if self.steps <= 0:
            raise ConfigError("steps must be positive")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.q_kind not in Q_KINDS:
            raise ConfigError(f"unknown q_kind {self.q_kind!r}")
        if self.d < 0:
            raise ConfigError("delay must be nonnegative")
        if self.method == "smbs" and (self.m < 1 or self.alpha < 0):
            raise ConfigError("smbs needs M >= 1 and alpha >= 0")
        if self.eval_every <= 0 or self.eval_steps <= 0 or self.final_eval_steps <= 0:
            raise ConfigError("evaluation period and lengths must be positive")
        if self.q_kind == "tabular" and self.method == "amdp":
            raise ConfigError("the AMDP baseline learns with DDQN")
        make_env(self.env, self.r)  # raises on unknown name / illegal randomness

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hidden"] = list(self.hidden)
        out["logstd_bounds"] = list(self.logstd_bounds)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def run_path(self) -> Path:
        return Path(self.env) / self.method / str(self.d) / repr(float(self.r)) / str(self.seed)


@dataclass
class EvalStats:
    mean_reward: float
    steps: int
    env_steps: int
    total_reward: float
    episode_returns: list
    return_mean: float | None
    return_std: float | None
    paths: list | None = None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.paths is None:
            out.pop("paths")
        return out


@dataclass
class Checkpoint:
    method: str
    env: str
    r: float
    d: int
    q: object  # TabularQ or Mlp
    model: object = None  # TabularModel, GaussianDynamicsModel or None
    step: int = 0
    q_kind: str = "ddqn"
    m: int = 50
    alpha: float = 0.01
    queue_init: str = "uniform"
    gamma: float = 0.99

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        meta = {
            "method": self.method,
            "env": self.env,
            "r": self.r,
            "d": self.d,
            "step": self.step,
            "q_kind": self.q_kind,
            "m": self.m,
            "alpha": self.alpha,
            "queue_init": self.queue_init,
            "gamma": self.gamma,
        }
        if isinstance(self.q, TabularQ):
            (path / "q.txt").write_text(self.q.dumps())
        else:
            self.q.save(path / "q.nn")
        if isinstance(self.model, TabularModel):
            (path / "model.txt").write_text(self.model.dumps())
        elif isinstance(self.model, GaussianDynamicsModel):
            self.model.net.save(path / "model.nn")
            meta["model"] = {
                "low": list(self.model.center - self.model.scale),
                "high": list(self.model.center + self.model.scale),
                "hidden": self.model.net.layer_sizes[1:-1],
                "logstd_bounds": list(self.model.logstd_bounds),
            }
        (path / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        meta = json.loads((path / "meta.json").read_text())
        if (path / "q.txt").exists():
            q = TabularQ.loads((path / "q.txt").read_text())
        else:
            q = Mlp.load(path / "q.nn")
        model = None
        if (path / "model.txt").exists():
            model = TabularModel.loads((path / "model.txt").read_text())
        elif (path / "model.nn").exists():
            model = _gaussian_from(Mlp.load(path / "model.nn"), meta["model"])
        meta.pop("model", None)
        return cls(q=q, model=model, **meta)


def _gaussian_from(net: Mlp, spec: dict) -> GaussianDynamicsModel:
    dim = len(spec["low"])
    model = GaussianDynamicsModel(
        dim,
        net.layer_sizes[0] - dim,
        spec["low"],
        spec["high"],
        hidden=spec["hidden"],
        logstd_bounds=tuple(spec["logstd_bounds"]),
    )
    model.net = net
    return model


@dataclass
class RunRecord:
    config: dict
    curve: list
    curve_steps: list
    best_step: int
    best_eval: float | None
    final: dict
    transitions: int
    env_steps: int
    seed: int
    checkpoint: str | None = None
    status: str = "ok"
    error: str | None = None
    wall_clock: float = field(default=0.0, compare=False)

    def to_json(self) -> str:
        """Canonical serialisation; wall-clock time is kept out so reruns match byte for byte."""
        data = dataclasses.asdict(self)
        data.pop("wall_clock")
        return json.dumps(data, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    def save(self, run_dir) -> None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "timing.json").write_text(json.dumps({"wall_clock": self.wall_clock}) + "\n")
        (run_dir / "record.json").write_text(self.to_json())

    @classmethod
    def load(cls, run_dir) -> "RunRecord":
        run_dir = Path(run_dir)
        rec = cls.from_json((run_dir / "record.json").read_text())
        timing = run_dir / "timing.json"
        if timing.exists():
            rec.wall_clock = json.loads(timing.read_text())["wall_clock"]
        return rec


# --- construction helpers -----------------------------------------------------


def queue_initializer(spec: str, num_actions: int):
    if spec == "uniform":
        return uniform_actions(num_actions)
    if spec.startswith("action:"):
        a = int(spec.split(":", 1)[1])
        if not 0 <= a < num_actions:
            raise ConfigError(f"queue_init action {a} out of range")
        return constant_action(a)
    raise ConfigError(f"unknown queue_init {spec!r}")


def state_encoder(env: Env):
    spec = env.spec
    if spec.discrete:
        return OneHotEncoder(spec.num_states)
    return BoxEncoder(spec.low, spec.high)


def make_encoder(env: Env, method: str, d: int):
    base = state_encoder(env)
    if method == "amdp":
        return AugmentedEncoder(base, env.spec.action_count, d)
    return base


def make_model(cfg: TrainConfig, env: Env, rng: np.random.Generator):
    spec = env.spec
    if spec.discrete:
        return TabularModel(spec.num_states, spec.action_count, cfg.model_smoothing)
    return GaussianDynamicsModel(
        spec.state_dim,
        spec.action_count,
        spec.low,
        spec.high,
        hidden=cfg.hidden,
        lr=cfg.model_lr,
        logstd_bounds=cfg.logstd_bounds,
        rng=rng,
    )


def checkpoint_q(ckpt: Checkpoint, env: Env):
    if isinstance(ckpt.q, TabularQ):
        return ckpt.q
    return NetQ(ckpt.q, make_encoder(env, ckpt.method, ckpt.d))


def make_policy(ckpt: Checkpoint, env: Env, rng: np.random.Generator, m: int | None = None, alpha: float | None = None):
    """Greedy decision function ``I -> action`` for a frozen checkpoint."""
    q = checkpoint_q(ckpt, env)
    m = ckpt.m if m is None else m
    alpha = ckpt.alpha if alpha is None else alpha
    if ckpt.method == "smbs":
        return lambda I: smbs_select(q, ckpt.model, I, m=m, alpha=alpha, rng=rng)[0]
    if ckpt.method == "delayed_q":
        return lambda I: delayed_q_select(q, ckpt.model, I)[0]
    if ckpt.method == "amdp":
        return lambda I: amdp_select(q, I)[0]
    raise ConfigError(f"unknown method {ckpt.method!r}")


def _seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]


# --- evaluation ---------------------------------------------------------------


def run_policy(
    policy: Callable[[AugmentedState], int],
    denv: DelayedEnv,
    steps: int,
    seed: int,
    record_paths: bool = False,
    episodes: int | None = None,
) -> EvalStats:
    """Roll ``policy`` for ``steps`` delayed steps, resetting at episode ends.

    The mean reward is per environment step: delivered reward divided by the
    number of transitions it came from, priming steps and the flushed tail of
    each episode included.  Dividing by decisions instead would pay ``d``
    free steps per episode and favour policies that fail fast.  With
    ``episodes`` set, ``steps`` is ignored and exactly that many episodes are
    played.  With ``record_paths`` the true states visited in each completed
    episode (one entry per environment step, priming included) are kept too.
    """
    env_seed, wrap_seed = _seeds(seed, 2)
    denv.env.seed(env_seed)
    I = denv.reset(seed=wrap_seed)
    path = [rec.s for rec in denv.drain_transitions()]
    total, ep_ret, taken, delivered = 0.0, 0.0, 0, 0
    returns, paths = [], []
    while (len(returns) < episodes) if episodes is not None else (taken < steps):
        I, reward, done = denv.step(policy(I))
        taken += 1
        total += reward
        ep_ret += reward
        recs = denv.drain_transitions()
        delivered += len(recs)
        path += [rec.s for rec in recs]
        if done:
            returns.append(ep_ret)
            if record_paths:
                paths.append([int(s) if np.ndim(s) == 0 else list(map(float, s)) for s in path])
            ep_ret = 0.0
            I = denv.reset()
            path = [rec.s for rec in denv.drain_transitions()]
    returns_arr = np.asarray(returns, dtype=np.float64)
    return EvalStats(
        mean_reward=total / delivered if delivered else 0.0,
        steps=taken,
        env_steps=delivered,
        total_reward=total,
        episode_returns=[float(x) for x in returns],
        return_mean=float(returns_arr.mean()) if returns else None,
        return_std=float(returns_arr.std(ddof=1)) if len(returns) > 1 else None,
        paths=paths if record_paths else None,
    )


def evaluate(
    ckpt: Checkpoint,
    steps: int = 10_000,
    seed: int = 0,
    env: str | None = None,
    r: float | None = None,
    d: int | None = None,
    method: str | None = None,
    record_paths: bool = False,
) -> EvalStats:
    """Greedy (no exploration) evaluation of a checkpoint in the delayed environment."""
    env_name = ckpt.env if env is None else env
    r = ckpt.r if r is None else r
    d = ckpt.d if d is None else d
    if method is not None and method != ckpt.method:
        raise ConfigError(f"checkpoint was trained with {ckpt.method!r}, not {method!r}")
    if ckpt.method == "amdp" and d != ckpt.d:
        raise ConfigError("an AMDP checkpoint only fits the delay it was trained with")
    base = make_env(env_name, r)
    if isinstance(ckpt.q, Mlp) and ckpt.q.layer_sizes[0] != make_encoder(base, ckpt.method, d).dim:
        raise ConfigError("checkpoint network input does not match the environment encoding")
    plan_seed, run_seed = _seeds(seed, 2)
    policy = make_policy(ckpt, base, np.random.default_rng(plan_seed))
    denv = DelayedEnv(base, d, queue_initializer(ckpt.queue_init, base.spec.action_count))
    return run_policy(policy, denv, steps, run_seed, record_paths)


# --- training -----------------------------------------------------------------


class _Learner:
    """Mutable training state for one run."""

    def __init__(self, cfg: TrainConfig, env: Env, seeds: list[int]):
        self.cfg = cfg
        self.spec = env.spec
        net_rng = np.random.default_rng(seeds[0])
        model_rng = np.random.default_rng(seeds[1])
        self.replay_rng = np.random.default_rng(seeds[2])
        self.model = None
        self.agent = None
        self.table = None
        if cfg.method != "amdp":
            self.model = make_model(cfg, env, model_rng)
        if cfg.q_kind == "tabular":
            self.table = TabularQ.zeros(self.spec.num_states, self.spec.action_count)
        else:
            self.agent = DqnAgent(
                make_encoder(env, cfg.method, cfg.d),
                self.spec.action_count,
                net_rng,
                hidden=cfg.hidden,
                lr=cfg.lr,
                gamma=cfg.gamma,
                capacity=cfg.replay_capacity,
                batch_size=cfg.batch_size,
                sync_every=cfg.sync_every,
            )
        self.q = self.table if self.table is not None else self.agent
        self.consumed = 0

    def observe_records(self, records) -> None:
        cfg = self.cfg
        for rec in records:
            self.consumed += 1
            if isinstance(self.model, TabularModel):
                self.model.observe(int(rec.s), rec.a, int(rec.s_next), rec.terminated)
            if self.table is not None:
                tabular_q_update(self.table, rec, cfg.gamma, cfg.tabular_lr)
            elif cfg.method != "amdp":
                self.agent.remember(rec.s, rec.a, rec.reward, rec.s_next, rec.terminated)

    def observe_augmented(self, I, a, reward, I_next, terminated) -> None:
        self.agent.remember(I, a, reward, I_next, terminated)

    def update(self) -> None:
        cfg = self.cfg
        if self.agent is not None and len(self.agent.replay) >= cfg.batch_size:
            ddqn_update(self.agent, self.agent.replay.sample(cfg.batch_size, self.replay_rng))
        if isinstance(self.model, GaussianDynamicsModel) and len(self.agent.replay) >= cfg.model_batch_size:
            s, a, _, s2, term = self.agent.replay.sample(cfg.model_batch_size, self.replay_rng)
            self.model.fit_arrays(s, a, s2, term)

    def snapshot(self, step: int) -> Checkpoint:
        cfg = self.cfg
        q = TabularQ(self.table.q.copy()) if self.table is not None else self.agent.online.copy()
        return Checkpoint(
            method=cfg.method,
            env=cfg.env,
            r=cfg.r,
            d=cfg.d,
            q=q,
            model=copy.deepcopy(self.model),
            step=step,
            q_kind=cfg.q_kind,
            m=cfg.m,
            alpha=cfg.alpha,
            queue_init=cfg.queue_init,
            gamma=cfg.gamma,
        )

    def select(self, I: AugmentedState, rng: np.random.Generator) -> int:
        cfg = self.cfg
        if cfg.method == "smbs":
            return smbs_select(self.q, self.model, I, m=cfg.m, alpha=cfg.alpha, rng=rng)[0]
        if cfg.method == "delayed_q":
            return delayed_q_select(self.q, self.model, I)[0]
        return amdp_select(self.q, I)[0]


def train(cfg: TrainConfig, run_dir=None) -> RunRecord:
    """Train one seeded run; with ``run_dir`` persist record and best checkpoint."""
    cfg.validate()
    t0 = time.perf_counter()
    seeds = _seeds(cfg.seed, 8)
    env = make_env(cfg.env, cfg.r, seed=seeds[3])
    eval_env = make_env(cfg.env, cfg.r)
    queue_init = queue_initializer(cfg.queue_init, env.spec.action_count)
    denv = DelayedEnv(env, cfg.d, queue_init, seed=seeds[4])
    eval_denv = DelayedEnv(eval_env, cfg.d, queue_init)
    explore_rng = np.random.default_rng(seeds[5])
    plan_rng = np.random.default_rng(seeds[6])
    eval_seed = seeds[7]
    learner = _Learner(cfg, env, seeds)
    schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, int(cfg.eps_fraction * cfg.steps))
    A = env.spec.action_count

    curve, curve_steps = [], []
    best, best_ckpt, best_step = -np.inf, None, 0
    status, error = "ok", None
    try:
        I = denv.reset()
        learner.observe_records(denv.drain_transitions())
        for t in range(cfg.steps):
            u = explore_rng.random()
            if u < schedule(t):
                a = int(explore_rng.integers(A))
            else:
                a = learner.select(I, plan_rng)
            I_next, reward, done = denv.step(a)
            if cfg.method == "amdp":
                learner.consumed += len(denv.drain_transitions())
                learner.observe_augmented(I, a, reward, I_next, done and denv.last_terminated)
            else:
                learner.observe_records(denv.drain_transitions())
            if t >= cfg.warmup and (t - cfg.warmup) % cfg.train_every == 0:
                learner.update()
            if done:
                I = denv.reset()
                drained = denv.drain_transitions()
                if cfg.method == "amdp":
                    learner.consumed += len(drained)
                else:
                    learner.observe_records(drained)
            else:
                I = I_next
            if (t + 1) % cfg.eval_every == 0:
                ckpt = learner.snapshot(t + 1)
                policy = make_policy(ckpt, eval_env, np.random.default_rng(eval_seed))
                stats = run_policy(policy, eval_denv, cfg.eval_steps, eval_seed)
                curve.append(stats.mean_reward)
                curve_steps.append(t + 1)
                log.info("%s step %d eval %.4f", cfg.method, t + 1, stats.mean_reward)
                if stats.mean_reward > best:
                    best, best_ckpt, best_step = stats.mean_reward, ckpt, t + 1
    except Exception as exc:  # diagnostic record instead of a crash
        log.exception("run failed")
        status, error = "failed", f"{type(exc).__name__}: {exc}"

    if best_ckpt is None and status == "ok":
        best_ckpt = learner.snapshot(cfg.steps)
        best_step = cfg.steps
    final = {}
    ckpt_ref = None
    if best_ckpt is not None:
        final = evaluate(best_ckpt, steps=cfg.final_eval_steps, seed=cfg.seed).to_dict()
        if run_dir is not None:
            best_ckpt.save(Path(run_dir) / "checkpoint")
            ckpt_ref = "checkpoint"
    record = RunRecord(
        config=cfg.to_dict(),
        curve=[float(c) for c in curve],
        curve_steps=curve_steps,
        best_step=best_step,
        best_eval=float(best) if np.isfinite(best) else None,
        final=final,
        transitions=learner.consumed,
        env_steps=denv.env_steps,
        seed=cfg.seed,
        checkpoint=ckpt_ref,
        status=status,
        error=error,
        wall_clock=time.perf_counter() - t0,
    )
    if run_dir is not None:
        record.save(run_dir)
    return record


# --- seed groups --------------------------------------------------------------


@dataclass
class SeedGroupResult:
    records: list
    top_k: int
    mean: float
    stderr: float
    top_seeds: list

    def rows(self) -> list[dict]:
        """One row per run plus a final aggregate row."""
        out = [
            {"kind": "run", "seed": rec.seed, "mean_reward": rec.final.get("mean_reward"), "status": rec.status}
            for rec in self.records
        ]
        out.append(
            {"kind": "aggregate", "top_k": self.top_k, "mean_reward": self.mean, "stderr": self.stderr, "seeds": self.top_seeds}
        )
        return out


def top_k_summary(values, k: int) -> tuple[float, float, list[int]]:
    """Mean and standard error of the ``k`` largest values (and their indices)."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(-values, kind="stable")[:k]
    top = values[order]
    stderr = float(top.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0
    return float(top.mean()), stderr, [int(i) for i in order]


def run_seed_group(cfg: TrainConfig, num_seeds: int = 5, top_k: int = 4, out_root=None) -> SeedGroupResult:
    if num_seeds < top_k:
        raise ConfigError("num_seeds must be at least top_k")
    records = []
    for i in range(num_seeds):
        run_cfg = dataclasses.replace(cfg, seed=cfg.seed + i)
        run_dir = None if out_root is None else Path(out_root) / run_cfg.run_path()
        records.append(train(run_cfg, run_dir))
    ok = [rec for rec in records if rec.status == "ok"]
    if len(ok) < top_k:
        log.warning("only %d of %d runs succeeded", len(ok), num_seeds)
    mean, stderr, idx = top_k_summary([rec.final["mean_reward"] for rec in ok], min(top_k, len(ok)))
    return SeedGroupResult(records, top_k, mean, stderr, [ok[i].seed for i in idx])
