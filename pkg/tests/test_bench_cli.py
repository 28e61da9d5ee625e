import json

import numpy as np
import pytest

from smbs import bench, cli
from smbs.trainer import RunRecord

TINY = {"steps": 20, "eval_every": 20, "eval_steps": 20, "final_eval_steps": 20, "warmup": 10, "batch_size": 8, "hidden": [8], "m": 3}


def fake_record(env, r, d, method, seed, reward, status="ok"):
    cfg = {"env": env, "r": r, "d": d, "method": method, "seed": seed}
    return RunRecord(config=cfg, curve=[reward], curve_steps=[1], best_step=1, best_eval=reward,
                     final={"mean_reward": reward}, transitions=1, env_steps=1 + d, seed=seed, status=status)


def test_sweep_counts_and_resume(tmp_path):
    grid = bench.ExperimentGrid(envs=["frozen_lake4", "cliff"], rs=[0.0, 0.1], ds=[1], methods=["smbs", "delayed_q", "amdp"],
                                seeds=list(range(5)), out_dir=str(tmp_path), base=TINY)
    first = bench.run_grid(grid)
    assert len(first.records) == 60 and first.trained == 60
    assert all(rec.status == "ok" for rec in first.records)
    assert len(list(tmp_path.glob("**/record.json"))) == 60
    again = bench.run_grid(grid)
    assert again.trained == 0 and again.reused == 60
    assert [r.to_json() for r in again.records] == [r.to_json() for r in first.records]


def test_failed_cells_are_retrained(tmp_path):
    grid = bench.ExperimentGrid(envs=["frozen_lake4"], rs=[0.0], ds=[1], methods=["delayed_q"], seeds=[0], out_dir=str(tmp_path), base=TINY)
    rec = bench.run_grid(grid).records[0]
    run_dir = tmp_path / grid.expand()[0].run_path()
    rec.status = "failed"
    rec.save(run_dir)
    assert bench.run_grid(grid).trained == 1


def test_fig4_table_means_and_missing():
    recs = [fake_record("frozen_lake8", 0.15, 15, "smbs", s, v) for s, v in enumerate([0.1, 0.5, 0.3, 0.2, 0.4])]
    recs += [fake_record("frozen_lake8", 0.15, 15, "amdp", s, 0.25) for s in range(5)]
    recs += [fake_record("frozen_lake8", 0.15, 15, "delayed_q", s, 0.3, "failed" if s < 2 else "ok") for s in range(5)]
    rows, missing = bench.emit_fig4_table(recs, cells=[("cartpole", 0.2, 5, "smbs")])
    by_method = {row["method"]: row for row in rows}
    assert by_method["smbs"]["mean_reward"] == pytest.approx(0.35)
    assert by_method["smbs"]["stderr"] == pytest.approx(np.std([0.5, 0.4, 0.3, 0.2], ddof=1) / 2)
    assert by_method["amdp"]["stderr"] == 0.0
    assert set(missing) == {("frozen_lake8", 0.15, 15, "delayed_q"), ("cartpole", 0.2, 5, "smbs")}
    schema, parsed = bench.read_csv(bench.format_csv(rows, bench.FIG4_COLUMNS, bench.FIG4_SCHEMA))
    assert schema == "fig4/v1" and len(parsed) == 2
    assert float(parsed[0]["mean_reward"]) in {0.25, 0.35}


def test_fig4_deterministic_cell_has_zero_stderr(tmp_path):
    # a learner that never updates acts identically on every seed of a deterministic task
    grid = bench.ExperimentGrid(envs=["frozen_lake4"], rs=[0.0], ds=[0], methods=["delayed_q"], seeds=list(range(5)),
                                out_dir=str(tmp_path), base={**TINY, "q_kind": "tabular", "tabular_lr": 0.0})
    result = bench.run_grid(grid)
    assert len({json.dumps(rec.final) for rec in result.records}) == 1
    rows, missing = bench.emit_fig4_table(result.records)
    assert not missing and len(rows) == 1 and rows[0]["stderr"] == 0.0


def run_cli(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_theorem1_exits_zero(capsys):
    code, out, _ = run_cli(["verify", "--theorem", "1", "--env", "frozen_lake4", "--d", "1", "--m", "1,5", "--alpha", "0,1"], capsys)
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines()]
    assert len(lines) == 4 and all(line["mismatches"] == [] for line in lines)


def test_verify_theorem2_reports_bound(capsys):
    code, out, _ = run_cli(["verify", "--theorem", "2", "--r", "0.15", "--d", "2", "--m", "5", "--delta", "2", "--trials", "500"], capsys)
    line = json.loads(out)
    assert code == 0 and line["frequency"] <= line["bound"] == 1.0


def test_unknown_method_is_usage_error(capsys, tmp_path):
    code, _, err = run_cli(["train", "--method", "mcts", "--out", str(tmp_path)], capsys)
    assert code == 2 and "usage" in err
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus"])
    assert exc.value.code != 0


def test_train_then_eval(capsys, tmp_path):
    code, out, _ = run_cli(["train", "--env", "frozen_lake4", "--d", "1", "--method", "delayed_q", "--steps", "40",
                            "--eval-every", "20", "--eval-steps", "30", "--final-eval-steps", "30", "--warmup", "10",
                            "--out", str(tmp_path)], capsys)
    assert code == 0
    final = json.loads(out)["final"]
    code, out, _ = run_cli(["eval", str(tmp_path / "checkpoint"), "--steps", "30", "--seed", "0"], capsys)
    assert code == 0 and json.loads(out)["mean_reward"] == final


def test_sweep_cli(capsys, tmp_path):
    argv = ["sweep", "--envs", "frozen_lake4", "--rs", "0", "--ds", "1", "--methods", "delayed_q,amdp", "--seeds", "0,1",
            "--out", str(tmp_path)] + [f"--set={k}={json.dumps(v)}" for k, v in TINY.items()]
    code, out, _ = run_cli(argv, capsys)
    assert code == 0 and json.loads(out) == {"cells": 4, "trained": 4, "reused": 0, "failed": 0}
    code, out, _ = run_cli(argv, capsys)
    assert json.loads(out)["reused"] == 4


ALPHA_ARGS = ["--slips", "0.05", "--alphas", "0,1", "--episodes", "4"]


def test_plotdata_is_byte_identical(monkeypatch, tmp_path):
    texts = []
    for name in ("a", "b"):
        monkeypatch.setenv(bench.RUNS_ENV_VAR, str(tmp_path / name))
        for kind in ("alpha", "paths"):
            out = tmp_path / f"{name}_{kind}.txt"
            assert cli.main(["plotdata", kind, *ALPHA_ARGS, "--out", str(out)]) == 0
            texts.append(out.read_bytes())
    assert texts[:2] == texts[2:]
    schema, rows = bench.read_csv(texts[0].decode())
    assert schema == "alpha_sweep/v1" and [float(r["alpha"]) for r in rows] == [0.0, 1.0]
    assert json.loads(texts[1])["schema"] == "cliff_paths/v1"


def test_fig4_plotdata_from_runs(tmp_path, capsys):
    for s in range(4):
        fake_record("cliff", 0.0, 1, "amdp", s, -1.0).save(tmp_path / "cliff" / "amdp" / "1" / "0.0" / str(s))
    code, out, _ = run_cli(["plotdata", "fig4", "--runs", str(tmp_path)], capsys)
    schema, rows = bench.read_csv(out)
    assert code == 0 and rows == [{"env": "cliff", "r": "0.0", "d": "1", "method": "amdp", "mean_reward": "-1.0", "stderr": "0.0", "n": "4"}]


def test_cliff_paths_without_slip_ignore_alpha():
    recs = bench.alpha_study(bench.AlphaStudyConfig(slip=0.0, alphas=(0.0, 0.5, 1.0), episodes=3, m=5))
    assert recs[0]["paths"] == recs[1]["paths"] == recs[2]["paths"]
    rows = bench.emit_cliff_paths(recs)
    assert len(rows) == 3 and len({row["mean_distance"] for row in rows}) == 1
    lengths = np.mean([len(p) for p in recs[0]["paths"]])
    for row in rows:
        assert np.sum(row["occupancy"]) == pytest.approx(lengths)


def test_alpha_sweep_one_row_per_alpha():
    recs = bench.alpha_study(bench.AlphaStudyConfig(slip=0.1, alphas=bench.ALPHA_GRID, episodes=3, m=5))
    rows = bench.emit_alpha_sweep(recs)
    assert [row["alpha"] for row in rows] == list(bench.ALPHA_GRID)
    assert all(row["n"] == 3 for row in rows)
    for row, rec in zip(rows, recs):
        assert row["mean_return"] == pytest.approx(np.mean(rec["returns"]))


def test_grid_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        bench.grid_from_dict({"envs": [], "colour": 1})
