"""ASR of the feedback search as a function of the round budget T.

Uses nested per-round rng streams, so each T extends the runs of the smaller
budgets and the curves can only go up.

    python scripts/rounds_sweep.py configs/default.yaml --rounds 1 2 5 10
"""

import argparse
from dataclasses import replace

import numpy as np

from fmms.config import FMMS, load_config
from fmms.evaluation import run_experiment


def main():
    p = argparse.ArgumentParser()
    p.add_argument("config")
    p.add_argument("--rounds", type=int, nargs="+", default=[1, 2, 5, 10])
    p.add_argument("-o", "--out", default="runs/rounds_sweep.csv")
    args = p.parse_args()
    cfg = load_config(args.config)
    cfg = replace(cfg, experiment=replace(cfg.experiment, methods=(FMMS,), rounds=tuple(args.rounds)))
    rows = run_experiment(cfg, args.out).rows

    curves = {}
    for r in rows:
        key = (r["surrogate"], r["target"], r["strategy"])
        curves.setdefault(key, {}).setdefault(r["rounds"], []).append((r["tr_asr"], r["ir_asr"]))
    print(f"{'surrogate':<9} {'target':<8} {'strategy':<8} " + " ".join(f"T={t:<11}" for t in args.rounds))
    for (sur, tgt, strategy), per_t in curves.items():
        cells = []
        for t in args.rounds:
            tr = np.mean([a for a, _ in per_t[t] if a is not None])
            ir = np.mean([b for _, b in per_t[t] if b is not None])
            cells.append(f"{tr:.3f}/{ir:.3f}")
        print(f"{sur:<9} {tgt:<8} {strategy:<8} " + " ".join(f"{c:<13}" for c in cells))
    print("cells are TR/IR ASR, mean over seeds")


if __name__ == "__main__":
    main()
