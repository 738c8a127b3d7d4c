"""Run the surrogate x target x method grid and print the seed-averaged table.

    python scripts/run_grid.py configs/default.yaml -o runs/report.csv
"""

import argparse
import logging
import time

from fmms.config import load_config
from fmms.evaluation import run_experiment, summarize


def main():
    p = argparse.ArgumentParser()
    p.add_argument("config")
    p.add_argument("-o", "--out", default="runs/report.csv")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    cfg = load_config(args.config)
    t0 = time.perf_counter()
    report = run_experiment(cfg, args.out)
    print(summarize(report.rows))
    print(f"{len(report.rows)} rows in {time.perf_counter() - t0:.0f}s -> {args.out}")


if __name__ == "__main__":
    main()
