"""Attack primitives and baseline pipelines.

Images: sign-gradient ascent projected onto the L-inf ball around the clean
image.  Text: greedy single-token substitution over embedding-nearest
neighbour candidates, which with ``epsilon_t = 1`` is an exact argmax over
the one-swap neighbourhood.
"""

import weakref
from dataclasses import dataclass

import numpy as np

from .augment import ScaleSet
from .coremath import normalize_rows
from .errors import InvalidConfig
from .losses import FULL, MATCHED_ONLY, ImageSetObjective, TextPushObjective

PGD_ONLY = "pgd_only"
TEXT_ONLY = "text_only"
SEP = "sep"
SGA_LIKE = "sga_like"
BASELINES = (PGD_ONLY, TEXT_ONLY, SEP, SGA_LIKE)

# candidates whose batched loss lies this close to the best are re-scored one by one
_SHORTLIST_TOL = 1e-9


@dataclass(frozen=True)
class ImageAttackBudget:
    epsilon_v: float = 2 / 255
    alpha: float = 0.5 / 255
    steps: int = 10

    def __post_init__(self):
        if not 0 < self.alpha <= self.epsilon_v <= 1:
            raise InvalidConfig("need 0 < alpha <= epsilon_v <= 1")
        if self.steps < 1:
            raise InvalidConfig("steps must be positive")


@dataclass(frozen=True)
class TextAttackBudget:
    epsilon_t: int = 1
    candidates_k: int = 10

    def __post_init__(self):
        if self.epsilon_t < 1 or self.candidates_k < 1:
            raise InvalidConfig("epsilon_t and candidates_k must be positive")


@dataclass(frozen=True)
class Budgets:
    image: ImageAttackBudget = ImageAttackBudget()
    text: TextAttackBudget = TextAttackBudget()


# -- images -------------------------------------------------------------------


def sign_pgd(grad_fn, v_clean, v_init, budget):
    """``steps`` iterations of v <- clip01(proj_{B(v_clean, eps)}(v + alpha * sign(grad)))."""
    v_clean = np.asarray(v_clean, dtype=np.float64)
    lo = np.maximum(v_clean - budget.epsilon_v, 0.0)
    hi = np.minimum(v_clean + budget.epsilon_v, 1.0)
    v = np.clip(np.asarray(v_init, dtype=np.float64), lo, hi)
    for _ in range(budget.steps):
        v = np.clip(v + budget.alpha * np.sign(grad_fn(v)), lo, hi)
    return v


def pgd_image_attack(m, v_clean, v_init, adv_caps, mis_caps, scales, budget, variant=FULL):
    objective = ImageSetObjective(m, adv_caps, mis_caps, scales, variant)
    return sign_pgd(objective.grad, v_clean, v_init, budget)


# -- text ---------------------------------------------------------------------

_neighbour_cache = weakref.WeakKeyDictionary()


def token_neighbours(m):
    """(V, V-1) array: for each token, all other tokens by descending cosine, ties by id."""
    hit = _neighbour_cache.get(m)
    if hit is None:
        unit = normalize_rows(m.token_table)
        sim = unit @ unit.T
        np.fill_diagonal(sim, -np.inf)
        order = np.argsort(-sim, axis=1, kind="stable")[:, :-1]
        hit = np.ascontiguousarray(order)
        _neighbour_cache[m] = hit
    return hit


def _candidate_swaps(m, current, anchor, budget):
    """Rows of (position, token) for every admissible single swap, in scan order."""
    nbrs = token_neighbours(m)[:, : budget.candidates_k]
    positions, tokens = [], []
    base_diff = current != anchor
    base_dist = int(base_diff.sum())
    for p, tok in enumerate(current):
        cand = nbrs[tok]
        # Hamming to the anchor after writing cand at p
        dist = base_dist - int(base_diff[p]) + (cand != anchor[p])
        cand = cand[dist <= budget.epsilon_t]
        positions.append(np.full(cand.size, p))
        tokens.append(cand)
    return np.concatenate(positions), np.concatenate(tokens)


def substitution_attack(m, loss, t_orig, budget, anchor=None):
    """Greedy best-swap search, at most ``epsilon_t`` rounds.

    Each round scans every (position, candidate) pair and applies the single
    swap with the largest loss, provided it strictly beats the current text;
    among equal losses the earliest position (then nearest candidate) wins.
    ``anchor`` (default ``t_orig``) is the sequence the Hamming budget is
    measured from.  ``loss`` may expose ``batch`` for vectorized scoring.
    """
    current = np.array(t_orig, dtype=np.int64)
    anchor = current.copy() if anchor is None else np.asarray(anchor, dtype=np.int64)
    best_loss = loss(current)
    batch = getattr(loss, "batch", None)
    for _ in range(budget.epsilon_t):
        positions, tokens = _candidate_swaps(m, current, anchor, budget)
        if positions.size == 0:
            break
        cands = np.repeat(current[None], positions.size, axis=0)
        cands[np.arange(positions.size), positions] = tokens
        if batch is not None:
            approx = np.asarray(batch(cands), dtype=np.float64)
            shortlist = np.flatnonzero(approx >= approx.max() - _SHORTLIST_TOL)
        else:
            shortlist = np.arange(positions.size)
        values = [loss(cands[j]) for j in shortlist]
        j = int(shortlist[int(np.argmax(values))])
        value = max(values)
        if not value > best_loss:
            break
        current, best_loss = cands[j], value
    return current


def hamming(a, b):
    return int(np.count_nonzero(np.asarray(a) != np.asarray(b)))


# -- baselines ----------------------------------------------------------------


def pair_views(d, pair):
    """Clean image, its first caption, and its full caption set."""
    caps = d.captions[d.match_map[pair]]
    return d.images[pair], caps[0], caps


def run_baseline(kind, surrogate, d, pair, budgets=Budgets(), scales=ScaleSet(), seed=0):
    """Adversarial (image, text) for one pair under a baseline attack.

    ``pgd_only``/``text_only``/``sep`` use the matched-only loss without
    scale augmentation.  ``sga_like`` is a single round of the mutual
    pipeline with the matched-only loss and scale augmentation.
    """
    v_i, t_i, caps = pair_views(d, pair)
    if kind == SGA_LIKE:
        from .search import SearchConfig, fmms_attack

        out = fmms_attack(
            surrogate, surrogate, d, pair, budgets, scales, SearchConfig(rounds=1), MATCHED_ONLY, seed
        )
        return out.v_adv, out.t_adv
    if kind not in BASELINES:
        raise InvalidConfig(f"unknown baseline {kind!r}")
    v_adv, t_adv = v_i.copy(), t_i.copy()
    if kind in (PGD_ONLY, SEP):
        v_adv = pgd_image_attack(surrogate, v_i, v_i, caps, [], (1.0,), budgets.image, MATCHED_ONLY)
    if kind in (TEXT_ONLY, SEP):
        objective = TextPushObjective(surrogate, v_i, variant=MATCHED_ONLY)
        t_adv = substitution_attack(surrogate, objective, t_i, budgets.text)
    return v_adv, t_adv
