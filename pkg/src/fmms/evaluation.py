"""Retrieval metrics, attack success rate and the experiment grid.

Report files written by :func:`run_experiment` for ``out_path = X.csv``:

``X.csv``         one row per cell; columns in :data:`REPORT_COLUMNS`.
                  Deterministic for a given config and seed list.
``X.json``        full config, seeds, artifact digests and the same rows.
``X.timing.csv``  wall-clock seconds per cell (kept apart so the two files
                  above stay byte-identical across runs).
"""

import csv
import hashlib
import io
import json
import logging
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .attacks import run_baseline
from .config import FMMS, PER_SUBTASK
from .data import dataset_to_bytes, generate_dataset, load_dataset, save_dataset
from .errors import EmptyDenominator, IoError
from .losses import LossVariant
from .models import (
    I2T,
    T2I,
    gallery_index,
    init_model,
    load_model,
    model_to_bytes,
    rank,
    save_model,
    score_embeddings,
    train_contrastive,
)
from .search import IMAGE_ONLY, TEXT_ONLY, check_attack_success, fmms_attack

log = logging.getLogger(__name__)

TR = "TR"
IR = "IR"

REPORT_COLUMNS = (
    "surrogate",
    "target",
    "method",
    "strategy",
    "rounds",
    "seed",
    "tr_r1_clean",
    "ir_r1_clean",
    "tr_asr",
    "tr_n",
    "ir_asr",
    "ir_n",
    "mean_target_queries",
)


# -- metrics ------------------------------------------------------------------


def _score_matrix(m, d):
    idx = gallery_index(m, d)
    return score_embeddings(m, idx.image_emb, idx.caption_emb)


def _topk(scores, k):
    """Top-k column indices per row with the ranking tie rule (ascending index)."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def recall_at_k(m, d, k, direction):
    s = _score_matrix(m, d)
    if direction == I2T:
        top = _topk(s, k)
        hits = d.caption_owner[top] == np.arange(d.n_images)[:, None]
        return float(np.mean(hits.any(axis=1)))
    if direction == T2I:
        top = _topk(s.T, k)
        hits = top == d.caption_owner[:, None]
        return float(np.mean(hits.any(axis=1)))
    raise ValueError(f"unknown direction {direction!r}")


def clean_correct(m, d):
    """Per-pair clean top-1 correctness: (TR mask over images, IR mask over first captions)."""
    tr = np.array([d.caption_owner[rank(m, d.images[i], d, I2T).indices[0]] == i for i in range(d.n_images)])
    first = d.match_map[:, 0]
    ir = np.array([rank(m, d.captions[first[i]], d, T2I).indices[0] == i for i in range(d.n_images)])
    return tr, ir


def attack_success_rate(outcomes, clean, subtask):
    """Share of clean-correct pairs whose ``subtask`` flag is set."""
    if len(outcomes) != len(clean):
        raise ValueError("outcomes and clean mask must be aligned by pair")
    attr = {TR: "tr_success", IR: "ir_success"}[subtask]
    denom = sum(bool(c) for c in clean)
    if denom == 0:
        raise EmptyDenominator(f"no clean-correct pairs for {subtask}")
    hits = sum(1 for o, c in zip(outcomes, clean) if c and getattr(o, attr))
    return hits / denom


# -- artifacts ----------------------------------------------------------------


def derive_seed(seed, *tags):
    words = [int(seed)] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def dataset_path(cfg, seed):
    key = _digest({"data": asdict(cfg.data), "seed": seed})
    return os.path.join(cfg.experiment.workdir, f"data-s{seed}-{key}.fmms")


def checkpoint_path(cfg, seed, kind):
    key = _digest({"data": asdict(cfg.data), "model": asdict(cfg.model), "train": asdict(cfg.train), "seed": seed})
    return os.path.join(cfg.experiment.workdir, f"{kind}-s{seed}-{key}.ckpt")


def make_dataset(cfg, seed):
    return generate_dataset(cfg.data, derive_seed(seed, "data"))


def make_model(cfg, d, seed, kind):
    m = init_model(kind, d.image_shape, d.vocab_size, cfg.model, derive_seed(seed, "init", kind))
    return train_contrastive(m, d, cfg.train, derive_seed(seed, "train", kind))


def ensure_dataset(cfg, seed):
    path = dataset_path(cfg, seed)
    if os.path.exists(path):
        return load_dataset(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    d = make_dataset(cfg, seed)
    save_dataset(d, path)
    return d


def ensure_model(cfg, d, seed, kind):
    path = checkpoint_path(cfg, seed, kind)
    if os.path.exists(path):
        return load_model(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    m = make_model(cfg, d, seed, kind)
    save_model(m, path)
    return m


# -- experiment grid ----------------------------------------------------------


@dataclass
class PairResult:
    tr_success: bool
    ir_success: bool
    target_queries: int


@dataclass
class Report:
    rows: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self):
        payload = {"meta": self.meta, "columns": list(REPORT_COLUMNS), "rows": self.rows}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write(self, out_path):
        base, _ = os.path.splitext(out_path)
        try:
            os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
            with open(out_path, "w", newline="") as fh:
                fh.write(self.to_csv())
            with open(base + ".json", "w") as fh:
                fh.write(self.to_json())
            with open(base + ".timing.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["surrogate", "target", "method", "strategy", "rounds", "seed", "runtime_s"])
                for row, rt in zip(self.rows, self.runtimes):
                    w.writerow([row[c] for c in REPORT_COLUMNS[:6]] + [f"{rt:.3f}"])
        except OSError as exc:
            raise IoError(f"cannot write report {out_path}: {exc}") from exc


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    if v is None:
        return ""
    return str(v)


def _rate(flags, clean):
    denom = int(np.sum(clean))
    if denom == 0:
        return None, 0
    return float(np.sum(np.asarray(flags) & clean) / denom), denom


class _Cell:
    """Picklable per-pair job for one grid cell."""

    def __init__(self, cfg, surrogate, target, d, method, strategy, rounds, seed):
        self.cfg, self.surrogate, self.target, self.d = cfg, surrogate, target, d
        self.method, self.strategy, self.rounds, self.seed = method, strategy, rounds, seed

    def __call__(self, job):
        pair, need_tr, need_ir = job
        cfg = self.cfg
        budgets, scales = cfg.attack.budgets(), cfg.attack.scale_set()
        variant = LossVariant(cfg.attack.use_mismatched)
        attack_seed = derive_seed(self.seed, "attack")
        stop = cfg.search.stop_condition
        if stop != PER_SUBTASK:
            sc = cfg.search.search_config(self.strategy, self.rounds, stop)
            o = fmms_attack(self.surrogate, self.target, self.d, pair, budgets, scales, sc, variant, attack_seed)
            return PairResult(o.tr_success, o.ir_success, o.target_queries)
        tr = ir = False
        queries = 0
        if need_tr:
            sc = cfg.search.search_config(self.strategy, self.rounds, IMAGE_ONLY)
            o = fmms_attack(self.surrogate, self.target, self.d, pair, budgets, scales, sc, variant, attack_seed)
            tr, queries = o.tr_success, queries + o.target_queries
        if need_ir:
            sc = cfg.search.search_config(self.strategy, self.rounds, TEXT_ONLY)
            o = fmms_attack(self.surrogate, self.target, self.d, pair, budgets, scales, sc, variant, attack_seed)
            ir, queries = o.ir_success, queries + o.target_queries
        return PairResult(tr, ir, queries)


class _Baseline:
    def __init__(self, cfg, surrogate, d, method, seed):
        self.cfg, self.surrogate, self.d, self.method, self.seed = cfg, surrogate, d, method, seed

    def __call__(self, pair):
        cfg = self.cfg
        return run_baseline(
            self.method, self.surrogate, self.d, pair, cfg.attack.budgets(), cfg.attack.scale_set(),
            derive_seed(self.seed, "attack"),
        )


def _map(fn, items, workers):
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def run_experiment(cfg, out_path=None, progress=None):
    """Run every (seed, surrogate, target, method, strategy, rounds) cell and collect a Report."""
    ex = cfg.experiment
    report = Report(meta={"config": cfg.to_dict(), "seeds": list(ex.seeds), "artifacts": {}})
    for seed in ex.seeds:
        d = ensure_dataset(cfg, seed)
        kinds = sorted(set(ex.surrogates) | set(ex.targets))
        models = {k: ensure_model(cfg, d, seed, k) for k in kinds}
        report.meta["artifacts"][str(seed)] = {
            "dataset": hashlib.sha256(dataset_to_bytes(d)).hexdigest(),
            **{k: hashlib.sha256(model_to_bytes(m)).hexdigest() for k, m in models.items()},
        }
        pairs = list(range(d.n_images if ex.max_pairs is None else min(ex.max_pairs, d.n_images)))
        clean = {k: tuple(mask[pairs] for mask in clean_correct(models[k], d)) for k in set(ex.targets)}
        baseline_cache = {}
        for sur in ex.surrogates:
            for tgt in ex.targets:
                tr_clean, ir_clean = clean[tgt]
                base = {
                    "surrogate": sur,
                    "target": tgt,
                    "seed": seed,
                    "tr_r1_clean": float(np.mean(tr_clean)),
                    "ir_r1_clean": float(np.mean(ir_clean)),
                }
                for method in ex.methods:
                    if method == FMMS:
                        cells = [(s, r) for s in ex.strategies for r in ex.rounds]
                    else:
                        cells = [("-", 1)]
                    for strategy, rounds in cells:
                        t0 = time.perf_counter()
                        if method == FMMS:
                            jobs = [(p, bool(tr_clean[n]), bool(ir_clean[n])) for n, p in enumerate(pairs)]
                            jobs = [j for j in jobs if j[1] or j[2]]
                            cell = _Cell(cfg, models[sur], models[tgt], d, method, strategy, rounds, seed)
                            done = dict(zip([j[0] for j in jobs], _map(cell, jobs, ex.workers)))
                            results = [done.get(p, PairResult(False, False, 0)) for p in pairs]
                        else:
                            key = (sur, method)
                            if key not in baseline_cache:
                                baseline_cache[key] = _map(_Baseline(cfg, models[sur], d, method, seed), pairs, ex.workers)
                            advs = baseline_cache[key]
                            results = [
                                PairResult(*check_attack_success(models[tgt], d, p, v, t), 0)
                                for p, (v, t) in zip(pairs, advs)
                            ]
                        tr_asr, tr_n = _rate([r.tr_success for r in results], tr_clean)
                        ir_asr, ir_n = _rate([r.ir_success for r in results], ir_clean)
                        attacked = [r for r, a, b in zip(results, tr_clean, ir_clean) if a or b]
                        row = dict(base)
                        row.update(
                            method=method,
                            strategy=strategy,
                            rounds=rounds,
                            tr_asr=tr_asr,
                            tr_n=tr_n,
                            ir_asr=ir_asr,
                            ir_n=ir_n,
                            mean_target_queries=float(np.mean([r.target_queries for r in attacked])) if attacked else 0.0,
                        )
                        report.rows.append(row)
                        report.runtimes.append(time.perf_counter() - t0)
                        log.info(
                            "seed=%s %s->%s %s/%s T=%s TR=%s IR=%s", seed, sur, tgt, method, strategy, rounds,
                            _fmt(tr_asr), _fmt(ir_asr),
                        )
                        if progress is not None:
                            progress(row)
    if out_path:
        report.write(out_path)
    return report


def read_report(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read report {path}: {exc}") from exc
    if rows and set(rows[0]) != set(REPORT_COLUMNS):
        raise IoError(f"{path} is not a report file (unexpected columns)")
    return rows


def summarize(rows):
    """Mean over seeds per (surrogate, target, method, strategy, rounds); returns printable text."""
    groups = {}
    for r in rows:
        key = (r["surrogate"], r["target"], r["method"], r["strategy"], str(r["rounds"]))
        groups.setdefault(key, []).append(r)

    def mean(rs, col):
        vals = [float(r[col]) for r in rs if r[col] not in ("", None)]
        return f"{np.mean(vals):.3f}" if vals else "n/a"

    header = ("surrogate", "target", "method", "strategy", "T", "seeds", "TR_ASR", "IR_ASR", "queries")
    lines = [header]
    for key, rs in groups.items():
        lines.append(key + (str(len(rs)), mean(rs, "tr_asr"), mean(rs, "ir_asr"), mean(rs, "mean_target_queries")))
    widths = [max(len(str(line[i])) for line in lines) for i in range(len(header))]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip() for line in lines)
