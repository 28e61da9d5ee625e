"""``smbs`` command line: train, eval, sweep, verify, plotdata."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from smbs import bench
from smbs.delay import AugmentedState
from smbs.envs import as_tabular, make_env
from smbs.mdp import shift_rewards
from smbs.theory import verify_theorem1, verify_theorem2
from smbs.trainer import Checkpoint, ConfigError, TrainConfig, evaluate, train

# flag name -> TrainConfig field, for the overrides accepted by ``train``
_TRAIN_FLAGS = {
    "env": str,
    "r": float,
    "d": int,
    "method": str,
    "q_kind": str,
    "steps": int,
    "m": int,
    "alpha": float,
    "seed": int,
    "gamma": float,
    "lr": float,
    "batch_size": int,
    "warmup": int,
    "eval_every": int,
    "eval_steps": int,
    "final_eval_steps": int,
    "queue_init": str,
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _csv_list(kind):
    return lambda text: [kind(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smbs", description="Delayed-control experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", type=Path, help="JSON file with TrainConfig fields")
    for name, kind in _TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    p.add_argument("--out", type=Path, help="run directory (default: runs root / run path)")

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=None)

    p = sub.add_parser("sweep", help="run an experiment grid, skipping finished cells")
    p.add_argument("--grid", type=Path, help="JSON file with ExperimentGrid fields")
    p.add_argument("--envs", type=_csv_list(str))
    p.add_argument("--rs", type=_csv_list(float))
    p.add_argument("--ds", type=_csv_list(int))
    p.add_argument("--methods", type=_csv_list(str))
    p.add_argument("--seeds", type=_csv_list(int))
    p.add_argument("--out", type=str)
    p.add_argument("--parallelism", type=int)
    p.add_argument("--set", action="append", default=[], metavar="FIELD=VALUE", help="TrainConfig override for every cell")

    p = sub.add_parser("verify", help="check the optimality results on a tabular task")
    p.add_argument("--theorem", type=int, choices=(1, 2), required=True)
    p.add_argument("--env", default="frozen_lake4")
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--m", type=_csv_list(int), default=[1, 5, 50])
    p.add_argument("--alpha", type=_csv_list(float), default=[0.0, 0.01, 1.0])
    p.add_argument("--delta", type=_csv_list(float), default=[2.0, 4.0])
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--shift", type=float, default=0.1, help="reward shift for theorem 2")
    p.add_argument("--base", type=int, default=None, help="base state for theorem 2 (default: start)")
    p.add_argument("--queue", type=_csv_list(int), default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plotdata", help="aggregate records into figure tables")
    p.add_argument("kind", choices=("fig4", "alpha", "paths"))
    p.add_argument("--runs", type=Path, help="runs root (fig4)")
    p.add_argument("--slips", type=_csv_list(float), default=[0.05, 0.2])
    p.add_argument("--alphas", type=_csv_list(float), default=list(bench.ALPHA_GRID))
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="write here instead of stdout")
    return ap


def _train_config(args) -> TrainConfig:
    data = json.loads(args.config.read_text()) if args.config else {}
    for name in _TRAIN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    cfg = TrainConfig.from_dict(data)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    run_dir = args.out or bench.runs_root() / cfg.run_path()
    rec = train(cfg, run_dir)
    print(json.dumps({"run_dir": str(run_dir), "status": rec.status, "best_eval": rec.best_eval, "final": rec.final.get("mean_reward")}))
    return 0 if rec.status == "ok" else 1


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    stats = evaluate(ckpt, steps=args.steps, seed=args.seed, d=args.d)
    out = stats.to_dict()
    out.pop("episode_returns")
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    data = json.loads(args.grid.read_text()) if args.grid else {}
    for name in ("envs", "rs", "ds", "methods", "seeds", "out", "parallelism"):
        value = getattr(args, name)
        if value is not None:
            data["out_dir" if name == "out" else name] = value
    base = dict(data.get("base", {}))
    for item in args.set:
        key, _, value = item.partition("=")
        base[key] = _parse_value(value)
    data["base"] = base
    missing = [k for k in ("envs", "rs", "ds", "methods", "seeds") if k not in data]
    if missing:
        raise ConfigError(f"grid is missing {', '.join(missing)}")
    grid = bench.grid_from_dict(data)
    result = bench.run_grid(grid)
    failed = sum(rec.status != "ok" for rec in result.records)
    print(json.dumps({"cells": len(result.records), "trained": result.trained, "reused": result.reused, "failed": failed}))
    return 0 if failed == 0 else 1


def cmd_verify(args) -> int:
    env = make_env(args.env, args.r)
    mdp = as_tabular(env)
    if args.theorem == 1:
        ok = True
        for m in args.m:
            for alpha in args.alpha:
                rep = verify_theorem1(mdp, args.d, m=m, alpha=alpha, seed=args.seed)
                ok &= rep.ok
                print(json.dumps({"d": args.d, "m": m, "alpha": alpha, "checked": rep.checked, "mismatches": [list(map(str, x)) for x in rep.mismatches]}))
        return 0 if ok else 1
    shifted = shift_rewards(mdp, args.shift)
    base = int(np.argmax(mdp.initial_dist)) if args.base is None else args.base
    queue = tuple(args.queue) if args.queue is not None else (0,) * args.d
    rng = np.random.default_rng(args.seed)
    ok = True
    for delta in args.delta:
        for m in args.m:
            rep = verify_theorem2(shifted, AugmentedState(base, queue), delta, m, args.trials, rng, reward_shift=args.shift)
            ok &= rep.within_bound
            print(json.dumps({"delta": delta, "m": m, "frequency": rep.frequency, "deviation_frequency": rep.deviation_frequency, "bound": rep.bound, "within_bound": rep.within_bound}))
    return 0 if ok else 1


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def alpha_records(slips, alphas, episodes: int, d: int, seed: int) -> list[dict]:
    """Run (or reuse cached) alpha-study records under the runs root."""
    out = []
    for slip in slips:
        cfg = bench.AlphaStudyConfig(slip=slip, alphas=tuple(alphas), episodes=episodes, d=d, seed=seed)
        path = bench.runs_root() / "alpha" / f"slip{slip!r}_d{d}_n{episodes}_seed{seed}.json"
        if path.exists():
            recs = bench.load_alpha_records(path)
            if [r["alpha"] for r in recs] == [float(a) for a in alphas]:
                out += recs
                continue
        recs = bench.alpha_study(cfg)
        bench.save_alpha_records(recs, path)
        out += recs
    return out


def cmd_plotdata(args) -> int:
    if args.kind == "fig4":
        rows, missing = bench.emit_fig4_table(bench.load_records(args.runs or bench.runs_root()))
        _emit(bench.format_csv(rows, bench.FIG4_COLUMNS, bench.FIG4_SCHEMA), args.out)
        for cell in missing:
            print(f"missing cell: {cell}", file=sys.stderr)
        return 0
    recs = alpha_records(args.slips, args.alphas, args.episodes, args.d, args.seed)
    if args.kind == "alpha":
        text = bench.format_csv(bench.emit_alpha_sweep(recs), bench.ALPHA_COLUMNS, bench.ALPHA_SCHEMA)
    else:
        text = bench.dumps_paths(bench.emit_cliff_paths(recs))
    _emit(text, args.out)
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "verify": cmd_verify, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, KeyError, ValueError, FileNotFoundError) as exc:
        parser.print_usage(sys.stderr)
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"smbs {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
