import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_dataset, tiny_model
from fmms.attacks import (
    PGD_ONLY, SEP, SGA_LIKE, TEXT_ONLY, Budgets, ImageAttackBudget, TextAttackBudget, hamming, pgd_image_attack,
    run_baseline, sign_pgd, substitution_attack, token_neighbours,
)
from fmms.augment import ScaleSet
from fmms.errors import InvalidConfig
from fmms.losses import MATCHED_ONLY, TextPushObjective
from fmms.models import ALIGNED, FUSED
from fmms.search import SearchConfig, fmms_attack


def test_single_pixel_saturates_at_budget():
    b = ImageAttackBudget(2 / 255, 0.5 / 255, 10)
    out = sign_pgd(lambda v: np.ones_like(v), np.array([[0.5]]), np.array([[0.5]]), b)
    assert out[0, 0] == pytest.approx(0.5 + 2 / 255, abs=1e-15)


def test_pgd_respects_unit_interval():
    b = ImageAttackBudget(0.1, 0.05, 5)
    v = np.array([[0.0, 1.0, 0.95]])
    out = sign_pgd(lambda x: np.array([[-1.0, 1.0, 1.0]]), v, v, b)
    np.testing.assert_allclose(out, [[0.0, 1.0, 1.0]])


@settings(max_examples=80, deadline=None)
@given(
    eps=st.floats(1e-3, 0.3), frac=st.floats(0.05, 1.0), steps=st.integers(1, 6),
    seed=st.integers(0, 10_000), warm=st.booleans(),
)
def test_pgd_budget_fuzz(eps, frac, steps, seed, warm):
    rng = np.random.default_rng(seed)
    v = rng.uniform(size=(4, 5))
    init = np.clip(v + rng.uniform(-0.5, 0.5, size=v.shape), 0, 1) if warm else v
    w = rng.normal(size=v.shape)
    out = sign_pgd(lambda x: w * np.cos(7 * x), v, init, ImageAttackBudget(eps, eps * frac, steps))
    assert np.abs(out - v).max() <= eps + 1e-12
    assert out.min() >= 0 and out.max() <= 1


def test_budget_validation():
    with pytest.raises(InvalidConfig):
        ImageAttackBudget(0.01, 0.02, 1)
    with pytest.raises(InvalidConfig):
        TextAttackBudget(0, 5)


def test_neighbours_sorted_by_cosine():
    d = tiny_dataset()
    m = tiny_model(ALIGNED, d)
    nb = token_neighbours(m)
    unit = m.token_table / np.linalg.norm(m.token_table, axis=1, keepdims=True)
    for tok in (0, 5, 17):
        assert tok not in nb[tok]
        sims = unit[nb[tok]] @ unit[tok]
        assert np.all(np.diff(sims) <= 1e-15)


def _brute_best(loss, t, vocab):
    best = loss(t)
    for p in range(len(t)):
        for tok in range(vocab):
            if tok != t[p]:
                c = t.copy()
                c[p] = tok
                best = max(best, loss(c))
    return best


def test_substitution_matches_exhaustive_single_swap():
    d = tiny_dataset(vocab_size=24)
    m = tiny_model(FUSED, d, steps=10)
    for i in range(6):
        loss = TextPushObjective(m, d.images[i], d.images[(i + 4) % 9])
        t = d.captions[3 * i]
        out = substitution_attack(m, loss, t, TextAttackBudget(1, d.vocab_size - 1))
        assert loss(out) == _brute_best(loss, t, d.vocab_size)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), eps=st.integers(1, 4), k=st.integers(1, 8), anchored=st.booleans())
def test_substitution_invariants(seed, eps, k, anchored):
    d = tiny_dataset()
    m = tiny_model(ALIGNED, d)
    rng = np.random.default_rng(seed)
    weights = rng.normal(size=(d.vocab_size, 4))

    def loss(t):  # arbitrary non-embedding loss, exercises the scalar path
        return float(np.sin(weights[t].sum(axis=0)).sum())

    t = rng.integers(0, d.vocab_size, size=4)
    anchor = rng.integers(0, d.vocab_size, size=4) if anchored else None
    ref = t if anchor is None else anchor
    if hamming(t, ref) > eps:
        return
    out = substitution_attack(m, loss, t, TextAttackBudget(eps, k), anchor=anchor)
    assert hamming(out, ref) <= eps
    assert loss(out) >= loss(t)
    assert out.min() >= 0 and out.max() < d.vocab_size


def test_substitution_no_improvement_returns_input():
    d = tiny_dataset()
    m = tiny_model(ALIGNED, d)
    t = d.captions[0]
    out = substitution_attack(m, lambda x: 0.0, t, TextAttackBudget(2, 5))
    np.testing.assert_array_equal(out, t)


def test_separate_equals_union_of_single_modality(kind):
    d = tiny_dataset()
    m = tiny_model(kind, d, steps=10)
    for pair in (0, 4):
        v_p, t_p = run_baseline(PGD_ONLY, m, d, pair)
        v_t, t_t = run_baseline(TEXT_ONLY, m, d, pair)
        v_s, t_s = run_baseline(SEP, m, d, pair)
        np.testing.assert_array_equal(v_s, v_p)
        np.testing.assert_array_equal(t_s, t_t)
        np.testing.assert_array_equal(t_p, d.captions[d.match_map[pair, 0]])
        np.testing.assert_array_equal(v_t, d.images[pair])


def test_sga_like_is_single_matched_only_round(kind):
    d = tiny_dataset()
    m = tiny_model(kind, d, steps=10)
    for pair in range(3):
        v, t = run_baseline(SGA_LIKE, m, d, pair, seed=7)
        out = fmms_attack(m, m, d, pair, Budgets(), ScaleSet(), SearchConfig(rounds=1), MATCHED_ONLY, 7)
        np.testing.assert_array_equal(v, out.v_adv)
        np.testing.assert_array_equal(t, out.t_adv)


def test_pgd_image_attack_increases_loss():
    d = tiny_dataset()
    m = tiny_model(ALIGNED, d, steps=20)
    from fmms.losses import image_set_loss

    adv, mis = d.captions[d.match_map[0]], d.captions[d.match_map[5]]
    b = ImageAttackBudget(8 / 255, 2 / 255, 10)
    v = pgd_image_attack(m, d.images[0], d.images[0], adv, mis, (0.5, 1.0), b)
    assert image_set_loss(m, v, adv, mis, (0.5, 1.0)) > image_set_loss(m, d.images[0], adv, mis, (0.5, 1.0))


def test_unknown_baseline():
    d = tiny_dataset()
    with pytest.raises(InvalidConfig):
        run_baseline("nope", tiny_model(ALIGNED, d), d, 0)
