"""Command-line entry point: ``fmms {gen-data,train,attack,report}``."""

import argparse
import logging
import os
import sys
from dataclasses import replace

from .config import load_config
from .errors import FmmsError
from .evaluation import (
    checkpoint_path,
    dataset_path,
    ensure_dataset,
    ensure_model,
    read_report,
    recall_at_k,
    run_experiment,
    summarize,
)
from .models import I2T, T2I

log = logging.getLogger("fmms")

MAX_SEED = 2**64 - 1


def _seed(text):
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser():
    p = argparse.ArgumentParser(prog="fmms", description="Feedback-based modal mutual search on toy retrieval models.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = p.add_subparsers(dest="command", required=True, metavar="{gen-data,train,attack,report}")

    def with_config(sp):
        sp.add_argument("-c", "--config", help="YAML config (default: $FMMS_CONFIG)")
        sp.add_argument("--seed", type=_seed, help="run a single seed instead of experiment.seeds")

    with_config(sub.add_parser("gen-data", help="write the synthetic dataset file(s)"))
    with_config(sub.add_parser("train", help="train surrogate/target checkpoints"))
    sp = sub.add_parser("attack", help="run the experiment grid and write reports")
    with_config(sp)
    sp.add_argument("-o", "--out", default=None, help="report CSV path (default: <workdir>/report.csv)")
    sp = sub.add_parser("report", help="print a summary table of an existing report CSV")
    sp.add_argument("path")
    return p


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, seeds=(args.seed,)))
    return cfg


def dispatch(args):
    if args.command == "report":
        print(summarize(read_report(args.path)))
        return 0
    cfg = _config(args)
    ex = cfg.experiment
    if args.command == "gen-data":
        for seed in ex.seeds:
            ensure_dataset(cfg, seed)
            print(dataset_path(cfg, seed))
        return 0
    if args.command == "train":
        for seed in ex.seeds:
            d = ensure_dataset(cfg, seed)
            for kind in sorted(set(ex.surrogates) | set(ex.targets)):
                m = ensure_model(cfg, d, seed, kind)
                log.info(
                    "seed %s %s: clean TR R@1 %.3f  IR R@1 %.3f",
                    seed, kind, recall_at_k(m, d, 1, I2T), recall_at_k(m, d, 1, T2I),
                )
                print(checkpoint_path(cfg, seed, kind))
        return 0
    if args.command == "attack":
        out = args.out or os.path.join(ex.workdir, "report.csv")
        report = run_experiment(cfg, out)
        print(summarize(report.rows))
        print(f"wrote {out}")
        return 0
    raise FmmsError(f"unknown command {args.command}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except FmmsError as exc:
        print(f"fmms: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
