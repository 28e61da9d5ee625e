"""Method ordering on the 8x8 frozen lake (r=0.15, d=15), five seeds per method.

Cached runs are reused, so the script can be interrupted and restarted.
"""

import argparse
import logging

from smbs.bench import FIG4_COLUMNS, FIG4_SCHEMA, ExperimentGrid, emit_fig4_table, format_csv, run_grid, runs_root

FL8_GRID = dict(envs=["frozen_lake8"], rs=[0.15], ds=[15], methods=["smbs", "delayed_q", "amdp"], seeds=[0, 1, 2, 3, 4])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=None)
    ap.add_argument("--parallelism", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    grid = ExperimentGrid(**FL8_GRID, out_dir=args.out or str(runs_root()), parallelism=args.parallelism)
    result = run_grid(grid)
    rows, missing = emit_fig4_table(result.records)
    print(format_csv(rows, FIG4_COLUMNS, FIG4_SCHEMA), end="")
    if missing:
        print("missing cells:", missing)


if __name__ == "__main__":
    main()
