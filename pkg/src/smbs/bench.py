"""Experiment grids, result persistence and figure-ready tables.

Runs live under ``<root>/<env>/<method>/<d>/<r>/<seed>/record.json``; the
root comes from ``$SMBS_RUNS_DIR`` (default ``runs``).  A cell whose record
already exists with status ``ok`` is never retrained, so sweeps resume.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from smbs.delay import DelayedEnv
from smbs.envs import Cliff
from smbs.envs.cliff import N_COLS, N_ROWS
from smbs.mdp import value_iteration
from smbs.models import MdpModel
from smbs.policies import smbs_select
from smbs.qlearn import TabularQ
from smbs.trainer import RunRecord, TrainConfig, queue_initializer, run_policy, top_k_summary, train

log = logging.getLogger(__name__)

RUNS_ENV_VAR = "SMBS_RUNS_DIR"
ALPHA_GRID = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
CLASSIC_DELAYS = (5, 15, 25)

FIG4_SCHEMA = "fig4/v1"
FIG4_COLUMNS = ("env", "r", "d", "method", "mean_reward", "stderr", "n")
ALPHA_SCHEMA = "alpha_sweep/v1"
ALPHA_COLUMNS = ("slip", "alpha", "n", "mean_return", "return_std", "stderr")
PATHS_SCHEMA = "cliff_paths/v1"


def runs_root(default: str = "runs") -> Path:
    return Path(os.environ.get(RUNS_ENV_VAR, default))


# --- grids --------------------------------------------------------------------


@dataclass
class ExperimentGrid:
    envs: list
    rs: list
    ds: list
    methods: list
    seeds: list
    out_dir: str | None = None
    parallelism: int = 1
    base: dict = field(default_factory=dict)

    def expand(self) -> list[TrainConfig]:
        cells = []
        for env, r, d, method, seed in itertools.product(self.envs, self.rs, self.ds, self.methods, self.seeds):
            cfg = TrainConfig.from_dict({**self.base, "env": env, "r": float(r), "d": int(d), "method": method, "seed": int(seed)})
            cfg.validate()
            cells.append(cfg)
        return cells

    def root(self) -> Path:
        return Path(self.out_dir) if self.out_dir is not None else runs_root()


@dataclass
class GridResult:
    records: list
    trained: int
    reused: int


def completed(run_dir: Path) -> RunRecord | None:
    path = Path(run_dir) / "record.json"
    if not path.exists():
        return None
    rec = RunRecord.load(run_dir)
    return rec if rec.status == "ok" else None


def _train_cell(args) -> RunRecord:
    cfg_dict, run_dir = args
    return train(TrainConfig.from_dict(cfg_dict), run_dir)


def run_grid(grid: ExperimentGrid) -> GridResult:
    root = grid.root()
    cells = grid.expand()
    records: list = [None] * len(cells)
    todo = []
    for i, cfg in enumerate(cells):
        done = completed(root / cfg.run_path())
        if done is not None:
            records[i] = done
        else:
            todo.append(i)
    jobs = [(cells[i].to_dict(), str(root / cells[i].run_path())) for i in todo]
    if grid.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=grid.parallelism) as pool:
            results = list(pool.map(_train_cell, jobs))
    else:
        results = [_train_cell(job) for job in jobs]
    for i, rec in zip(todo, results):
        records[i] = rec
        log.info("trained %s: %s", cells[i].run_path(), rec.status)
    return GridResult(records, trained=len(todo), reused=len(cells) - len(todo))


def load_records(root) -> list[RunRecord]:
    return [RunRecord.load(p.parent) for p in sorted(Path(root).glob("**/record.json"))]


# --- tables -------------------------------------------------------------------


def cell_key(rec: RunRecord) -> tuple:
    c = rec.config
    return (c["env"], float(c["r"]), int(c["d"]), c["method"])


def emit_fig4_table(records, cells=None, top_k: int = 4) -> tuple[list[dict], list[tuple]]:
    """Top-``k`` mean per (env, r, d, method) and the cells lacking ``k`` good runs."""
    groups: dict = {}
    for rec in records:
        groups.setdefault(cell_key(rec), []).append(rec)
    wanted = sorted(set(groups) | set(map(tuple, cells or [])))
    rows, missing = [], []
    for key in wanted:
        ok = [rec for rec in groups.get(key, []) if rec.status == "ok"]
        if len(ok) < top_k:
            missing.append(key)
            continue
        ok.sort(key=lambda rec: rec.seed)
        mean, stderr, _ = top_k_summary([rec.final["mean_reward"] for rec in ok], top_k)
        env, r, d, method = key
        rows.append({"env": env, "r": r, "d": d, "method": method, "mean_reward": mean, "stderr": stderr, "n": top_k})
    return rows, missing


def format_csv(rows, columns, schema: str) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> tuple[str, list[dict]]:
    first, rest = text.split("\n", 1)
    if not first.startswith("# schema: "):
        raise ValueError("missing schema line")
    return first[len("# schema: ") :], list(csv.DictReader(io.StringIO(rest)))


# --- risk-parameter study -----------------------------------------------------


@dataclass
class AlphaStudyConfig:
    slip: float
    alphas: tuple = ALPHA_GRID
    episodes: int = 500
    d: int = 5
    m: int = 50
    queue_init: str = "action:0"
    seed: int = 0
    gamma: float = 0.99


def alpha_study(cfg: AlphaStudyConfig) -> list[dict]:
    """SMBS with exact q* and the exact model on Cliff, one record per alpha.

    Every alpha replays the same seeds (common random numbers), so
    differences between rows come from the decisions alone.
    """
    env = Cliff(cfg.slip)
    mdp = env.as_tabular(cfg.gamma)
    q = TabularQ(value_iteration(mdp).q_star)
    model = MdpModel(mdp)
    out = []
    for alpha in cfg.alphas:
        plan_rng = np.random.default_rng(cfg.seed)
        policy = lambda I, a=alpha: smbs_select(q, model, I, m=cfg.m, alpha=a, rng=plan_rng)[0]
        denv = DelayedEnv(Cliff(cfg.slip), cfg.d, queue_initializer(cfg.queue_init, 4))
        stats = run_policy(policy, denv, 0, cfg.seed + 1, record_paths=True, episodes=cfg.episodes)
        out.append(
            {
                "slip": float(cfg.slip),
                "alpha": float(alpha),
                "d": cfg.d,
                "m": cfg.m,
                "episodes": cfg.episodes,
                "returns": stats.episode_returns,
                "paths": stats.paths,
            }
        )
    return out


def save_alpha_records(records, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(records, sort_keys=True) + "\n")


def load_alpha_records(path) -> list[dict]:
    return json.loads(Path(path).read_text())


def emit_alpha_sweep(records) -> list[dict]:
    rows = []
    for rec in records:
        ret = np.asarray(rec["returns"], dtype=np.float64)
        n = len(ret)
        std = float(ret.std(ddof=1)) if n > 1 else 0.0
        rows.append(
            {
                "slip": rec["slip"],
                "alpha": rec["alpha"],
                "n": n,
                "mean_return": float(ret.mean()),
                "return_std": std,
                "stderr": std / np.sqrt(n),
            }
        )
    return rows


def _episode_distance(path) -> float:
    """Mean rows-above-the-cliff over the steps spent in columns 1..10."""
    dists = [Cliff.distance_to_cliff(s) for s in path if 1 <= s % N_COLS <= N_COLS - 2]
    return float(np.mean(dists)) if dists else float("nan")


def emit_cliff_paths(records, alphas=None) -> list[dict]:
    """Per-alpha mean occupancy grid, per-column distance and overall distance.

    ``occupancy`` counts visits per cell averaged over episodes, so each
    episode's counts sum to its length.  ``mean_distance`` averages the
    per-episode interior distance; ``distance_stderr`` is its standard error.
    """
    rows = []
    for rec in records:
        if alphas is not None and rec["alpha"] not in alphas:
            continue
        occ = np.zeros(N_ROWS * N_COLS)
        for path in rec["paths"]:
            occ += np.bincount(np.asarray(path, dtype=np.int64), minlength=N_ROWS * N_COLS)
        n = len(rec["paths"])
        occ /= max(n, 1)
        grid = occ.reshape(N_ROWS, N_COLS)
        rows_above = (N_ROWS - 1 - np.arange(N_ROWS))[:, None]
        col_mass = grid.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            per_col = (grid * rows_above).sum(axis=0) / col_mass
        ep = np.array([_episode_distance(p) for p in rec["paths"]])
        ep = ep[~np.isnan(ep)]
        rows.append(
            {
                "slip": rec["slip"],
                "alpha": rec["alpha"],
                "occupancy": grid.tolist(),
                "column_distance": [None if np.isnan(x) else float(x) for x in per_col],
                "mean_distance": float(ep.mean()) if len(ep) else float("nan"),
                "distance_stderr": float(ep.std(ddof=1) / np.sqrt(len(ep))) if len(ep) > 1 else 0.0,
                "episodes": n,
            }
        )
    return rows


def dumps_paths(rows) -> str:
    return json.dumps({"schema": PATHS_SCHEMA, "rows": rows}, sort_keys=True, indent=1) + "\n"


def grid_from_dict(data: dict) -> ExperimentGrid:
    known = {f.name for f in dataclasses.fields(ExperimentGrid)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown grid fields: {sorted(unknown)}")
    return ExperimentGrid(**data)
