"""Modal mutual losses and their pixel gradients.

Every loss is written over ``score()``, so the same code drives aligned and
fused surrogates.  With ``use_mismatched=False`` the pull term towards the
mismatched side is dropped, which gives the matched-only (SGA-style) loss.
"""

from dataclasses import dataclass

import numpy as np

from .augment import scale_image, scale_image_adjoint
from .coremath import normalize_rows
from .models import encode_images, encode_texts, score, score_embeddings


@dataclass(frozen=True)
class LossVariant:
    use_mismatched: bool = True


FULL = LossVariant(True)
MATCHED_ONLY = LossVariant(False)


def text_push_loss(m, t, v_match, v_mismatch, variant=FULL):
    """score(v_mismatch, t) - score(v_match, t), or -score(v_match, t) when matched-only."""
    push = -score(m, v_match, t)
    if not variant.use_mismatched:
        return push
    return score(m, v_mismatch, t) + push


class TextPushObjective:
    """``text_push_loss`` with the two images fixed, as a function of the text.

    Calling it on one token sequence returns the loss; ``batch`` scores an
    (n, L) array of candidates in one pass.  Both paths share the same
    precomputed image directions, so they agree to rounding.
    """

    def __init__(self, m, v_match, v_mismatch=None, variant=FULL):
        self.model = m
        self.variant = variant
        imgs = [v_match] if not variant.use_mismatched else [v_match, v_mismatch]
        units = normalize_rows(encode_images(m, np.stack(imgs)))
        self.directions = units @ m.head
        self._clip = m.W is None

    def batch(self, captions):
        u = normalize_rows(encode_texts(self.model, np.atleast_2d(captions)))
        s = u @ self.directions.T
        if self._clip:
            s = np.clip(s, -1.0, 1.0)
        if self.variant.use_mismatched:
            return s[:, 1] - s[:, 0]
        return -s[:, 0]

    def __call__(self, t):
        return float(self.batch(np.asarray(t)[None])[0])


def _text_units(m, captions):
    if len(captions) == 0:
        return np.zeros((0, m.embed_dim))
    return normalize_rows(encode_texts(m, np.asarray(captions)))


def image_set_loss(m, v, adv_caps, mis_caps, scales, variant=FULL):
    """Sum over scales of (sum_k score(g(v,s), t_k) - sum_m score(g(v,s), t'_m))."""
    total = 0.0
    for s in scales:
        e = encode_images(m, scale_image(v, s)[None])
        if variant.use_mismatched and len(mis_caps):
            total += score_embeddings(m, e, encode_texts(m, np.asarray(mis_caps))).sum()
        total -= score_embeddings(m, e, encode_texts(m, np.asarray(adv_caps))).sum()
    return float(total)


def image_set_loss_product(m, v, adv_caps, mis_caps, scales, variant=FULL):
    """Aligned-model form: (sum_k n(u_k) - sum_m n(u'_m)) . sum_s n(F_I(g(v, s)))."""
    direction = -_text_units(m, adv_caps).sum(axis=0)
    if variant.use_mismatched:
        direction = direction + _text_units(m, mis_caps).sum(axis=0)
    img = normalize_rows(encode_images(m, np.stack([scale_image(v, s) for s in scales])))
    return float(direction @ img.sum(axis=0))


class ImageSetObjective:
    """``image_set_loss`` with the caption sets fixed, as a function of pixels.

    The caption side collapses to one vector ``c = W (sum_k n(u_k) - sum_m n(u'_m))``
    so that the loss is ``sum_s n(e_s) . c`` with ``e_s = F_I(g(v, s))``.
    """

    def __init__(self, m, adv_caps, mis_caps, scales, variant=FULL):
        self.model = m
        self.scales = tuple(scales)
        direction = -_text_units(m, adv_caps).sum(axis=0)
        if variant.use_mismatched:
            direction = direction + _text_units(m, mis_caps).sum(axis=0)
        self.direction = m.head @ direction

    def _forward(self, v):
        m = self.model
        x = np.stack([scale_image(v, s).reshape(-1) for s in self.scales])
        a = np.tanh(x @ m.W1.T + m.b1)
        e = a @ m.W2.T
        return a, e

    def __call__(self, v):
        _, e = self._forward(v)
        return float(np.sum(normalize_rows(e) @ self.direction))

    def value_and_grad(self, v):
        m = self.model
        a, e = self._forward(v)
        norms = np.linalg.norm(e, axis=1, keepdims=True)
        ne = normalize_rows(e)
        value = float(np.sum(ne @ self.direction))
        # d n(e)/de applied to c: (c - n n.c) / |e|
        de = (self.direction[None, :] - ne * (ne @ self.direction)[:, None]) / norms
        dz = (de @ m.W2) * (1.0 - a * a)
        dx = dz @ m.W1
        shape = np.shape(v)
        grad = np.zeros(shape)
        for s, row in zip(self.scales, dx):
            grad += scale_image_adjoint(row.reshape(shape), s)
        return value, grad

    def grad(self, v):
        return self.value_and_grad(v)[1]


def grad_image_set_loss(m, v, adv_caps, mis_caps, scales, variant=FULL):
    return ImageSetObjective(m, adv_caps, mis_caps, scales, variant).grad(v)
