"""SMBS against Delayed-Q on noisy cartpole (r in {0.2, 0.3}, d=5).

Three independent five-seed groups (seeds 0-4, 10-14, 20-24).
"""

import argparse
import logging

from smbs.bench import FIG4_COLUMNS, FIG4_SCHEMA, ExperimentGrid, emit_fig4_table, format_csv, run_grid, runs_root

REPLICATIONS = (0, 10, 20)


def grid_for(base_seed: int, out_dir: str, parallelism: int = 1) -> ExperimentGrid:
    return ExperimentGrid(
        envs=["cartpole"],
        rs=[0.2, 0.3],
        ds=[5],
        methods=["smbs", "delayed_q"],
        seeds=list(range(base_seed, base_seed + 5)),
        out_dir=out_dir,
        parallelism=parallelism,
        base={"m": 50, "alpha": 0.01},
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=None)
    ap.add_argument("--parallelism", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for base_seed in REPLICATIONS:
        result = run_grid(grid_for(base_seed, args.out or str(runs_root()), args.parallelism))
        rows, _ = emit_fig4_table(result.records)
        print(f"replication seeds {base_seed}-{base_seed + 4}")
        print(format_csv(rows, FIG4_COLUMNS, FIG4_SCHEMA), end="")


if __name__ == "__main__":
    main()
