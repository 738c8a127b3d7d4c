"""Feedback-driven modal mutual search.

Round 0 builds an adversarial pair from a random mismatch.  Each later round
asks the target model whether the current pair already fools it; if not, the
target's own rankings of the adversarial pair supply the next mismatches
(Top-N prefix or the whole ranked gallery) and the pair is regenerated.

Naming is deliberately cross-wired: ``B_tr`` holds *images* ranked by
the adversarial text and feeds the text losses, ``B_ir`` holds *captions*
ranked by the adversarial image and feeds the image loss.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .attacks import Budgets, pair_views, pgd_image_attack, substitution_attack
from .augment import ScaleSet
from .errors import DegenerateGallery, InvalidConfig
from .losses import FULL, TextPushObjective
from .models import I2T, T2I, rank

TOPN = "topn"
FULL_SEARCH = "full"
STRATEGIES = (TOPN, FULL_SEARCH)

EITHER = "either"
BOTH = "both"
IMAGE_ONLY = "image_only"
TEXT_ONLY = "text_only"
STOP_CONDITIONS = (EITHER, BOTH, IMAGE_ONLY, TEXT_ONLY)

ORIGINAL = "original"
ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class SearchConfig:
    strategy: str = TOPN
    n_tr: int = 10
    n_ir: int = 5
    rounds: int = 10
    stop_condition: str = EITHER
    # image of each round starts from the previous v_adv (else from the clean image)
    warm_start: bool = True
    # rebuild the adversarial caption set every round (else keep round 0's)
    regenerate_captions: bool = True
    # final text search starts from t_i ("original") or from t'_i ("adversarial")
    text_seed: str = ORIGINAL

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"unknown strategy {self.strategy!r}")
        if self.stop_condition not in STOP_CONDITIONS:
            raise InvalidConfig(f"unknown stop_condition {self.stop_condition!r}")
        if self.text_seed not in (ORIGINAL, ADVERSARIAL):
            raise InvalidConfig(f"unknown text_seed {self.text_seed!r}")
        if self.rounds < 1 or self.n_tr < 1 or self.n_ir < 1:
            raise InvalidConfig("rounds, n_tr and n_ir must be positive")

    def space_sizes(self, d):
        if self.strategy == FULL_SEARCH:
            return d.n_images, d.n_captions
        return min(self.n_tr, d.n_images), min(self.n_ir, d.n_captions)


@dataclass(frozen=True)
class SearchSpaces:
    b_tr: np.ndarray
    b_ir: np.ndarray


@dataclass(frozen=True, eq=False)
class AttackOutcome:
    v_adv: np.ndarray
    t_adv: np.ndarray
    rounds_used: int
    tr_success: bool
    ir_success: bool
    target_queries: int

    def to_bytes(self):
        head = np.array(
            [self.rounds_used, int(self.tr_success), int(self.ir_success), self.target_queries], dtype="<i8"
        )
        return (
            head.tobytes()
            + np.asarray(self.v_adv, dtype="<f8").tobytes()
            + np.asarray(self.t_adv, dtype="<i8").tobytes()
        )

    def digest(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, AttackOutcome):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


def round_rng(seed, pair, round_id):
    """Independent stream per (seed, pair, round); identical whatever the round budget."""
    return np.random.default_rng([int(seed), int(pair), int(round_id)])


def check_attack_success(target, d, pair, v_adv, t_adv):
    """(tr_success, ir_success) of an adversarial pair on the target model."""
    top_caption = rank(target, v_adv, d, I2T).indices[0]
    top_image = rank(target, t_adv, d, T2I).indices[0]
    return bool(d.caption_owner[top_caption] != pair), bool(top_image != pair)


def build_search_spaces(target, d, v_adv, t_adv, cfg):
    n_tr, n_ir = cfg.space_sizes(d)
    b_tr = rank(target, t_adv, d, T2I).top(n_tr)
    b_ir = rank(target, v_adv, d, I2T).top(n_ir)
    return SearchSpaces(b_tr=b_tr.copy(), b_ir=b_ir.copy())


def select_mismatched(spaces, d, pair, rng):
    """Draw v_j from B_tr and a caption from B_ir, excluding the pair's own ground truth.

    Returns ``(v_j index, caption indices of the drawn caption's image)``.  An
    empty space after exclusion falls back to the whole gallery.
    """
    images = spaces.b_tr[spaces.b_tr != pair]
    if images.size == 0:
        images = np.delete(np.arange(d.n_images), pair)
    captions = spaces.b_ir[d.caption_owner[spaces.b_ir] != pair]
    if captions.size == 0:
        captions = np.flatnonzero(d.caption_owner != pair)
    if images.size == 0 or captions.size == 0:
        raise DegenerateGallery("gallery has no item outside the pair's ground truth")
    v_j = int(images[rng.integers(images.size)])
    caption = int(captions[rng.integers(captions.size)])
    return v_j, d.match_map[d.caption_owner[caption]].copy()


def full_gallery_spaces(d):
    return SearchSpaces(b_tr=np.arange(d.n_images), b_ir=np.arange(d.n_captions))


def mutual_round(surrogate, d, pair, v_init, v_j, mis_caps, budgets, scales, variant, cfg, adv_caps=None):
    """One pass of caption-set attack, image attack and final text attack.

    Returns ``(v_adv, t_adv, adv_caps)``.  Passing ``adv_caps`` skips the
    caption-set step and reuses them.
    """
    v_i, t_i, caps = pair_views(d, pair)
    v_mis = d.images[v_j]
    if adv_caps is None:
        push = TextPushObjective(surrogate, v_i, v_mis, variant)
        adv_caps = np.stack([substitution_attack(surrogate, push, t, budgets.text) for t in caps])
    v_adv = pgd_image_attack(
        surrogate, v_i, v_init, adv_caps, d.captions[mis_caps], scales, budgets.image, variant
    )
    final = TextPushObjective(surrogate, v_adv, v_mis, variant)
    start = t_i if cfg.text_seed == ORIGINAL else adv_caps[0]
    t_adv = substitution_attack(surrogate, final, start, budgets.text, anchor=t_i)
    return v_adv, t_adv, adv_caps


def _should_stop(cond, tr, ir):
    if cond == EITHER:
        return tr or ir
    if cond == BOTH:
        return tr and ir
    if cond == IMAGE_ONLY:
        return tr
    return ir


def fmms_attack(
    surrogate, target, d, pair, budgets=Budgets(), scales=ScaleSet(), cfg=SearchConfig(), variant=FULL, seed=0
):
    """Run the feedback search for one pair; deterministic in ``seed``.

    Query accounting: every success check and every search-space build costs
    two ``rank`` calls on the target.  The flags of a run that exhausts its
    rounds come from one closing check, which is counted as well.
    """
    if not 0 <= pair < d.n_images:
        raise IndexError(f"pair {pair} outside gallery of {d.n_images}")
    if d.n_images < 2:
        raise DegenerateGallery("need at least two images to pick a mismatch")
    v_i = d.images[pair]
    v_j, mis_caps = select_mismatched(full_gallery_spaces(d), d, pair, round_rng(seed, pair, 0))
    v_adv, t_adv, adv_caps = mutual_round(surrogate, d, pair, v_i, v_j, mis_caps, budgets, scales, variant, cfg)
    queries = 0
    rounds_used = 1
    for r in range(1, cfg.rounds):
        tr, ir = check_attack_success(target, d, pair, v_adv, t_adv)
        queries += 2
        if _should_stop(cfg.stop_condition, tr, ir):
            return AttackOutcome(v_adv, t_adv, rounds_used, tr, ir, queries)
        spaces = build_search_spaces(target, d, v_adv, t_adv, cfg)
        queries += 2
        v_j, mis_caps = select_mismatched(spaces, d, pair, round_rng(seed, pair, r))
        v_init = v_adv if cfg.warm_start else v_i
        reuse = None if cfg.regenerate_captions else adv_caps
        v_adv, t_adv, adv_caps = mutual_round(
            surrogate, d, pair, v_init, v_j, mis_caps, budgets, scales, variant, cfg, adv_caps=reuse
        )
        rounds_used += 1
    tr, ir = check_attack_success(target, d, pair, v_adv, t_adv)
    return AttackOutcome(v_adv, t_adv, rounds_used, tr, ir, queries + 2)
