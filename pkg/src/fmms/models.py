"""Toy retrieval models: aligned cosine bi-encoder and fused bilinear scorer.

Image encoder: ``W2 @ tanh(W1 @ flatten(v) + b1)``.
Text encoder:  ``P @ mean(token_table[tokens])``.
Score: cosine for ``aligned``; ``n(e)^T W n(u)`` on unit embeddings for ``fused``.
"""

import logging
import weakref
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import container
from .coremath import normalize_rows, rowwise_matmul
from .errors import DivergedTraining, InvalidConfig, IoError, ShapeMismatch, TokenOutOfRange

log = logging.getLogger(__name__)

ALIGNED = "aligned"
FUSED = "fused"
KINDS = (ALIGNED, FUSED)

I2T = "image->text"
T2I = "text->image"

MODEL_KIND = "MODEL"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    embed_dim: int = 32
    token_dim: int = 32
    # small token rows speed up learning of the (sparsely updated) token table
    token_init_scale: float = 0.05


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.07
    lr: float = 0.04
    momentum: float = 0.9
    lr_decay: str = "linear"  # "linear" to zero over ``steps``, or "none"
    steps: int = 2000
    batch_size: int = 64


@dataclass(frozen=True, eq=False)
class RetrievalModel:
    kind: str
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    token_table: np.ndarray
    P: np.ndarray
    W: np.ndarray | None = None
    image_shape: tuple = field(default=(16, 16))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown model kind {self.kind!r}")
        if (self.kind == FUSED) != (self.W is not None):
            raise InvalidConfig("fused models need a bilinear W; aligned models must not have one")
        h, hw = self.W1.shape
        d = self.W2.shape[0]
        if (
            hw != self.image_shape[0] * self.image_shape[1]
            or self.b1.shape != (h,)
            or self.W2.shape != (d, h)
            or self.P.shape != (d, self.token_table.shape[1])
            or (self.W is not None and self.W.shape != (d, d))
        ):
            raise ShapeMismatch("inconsistent parameter shapes")
        for name in ("W1", "b1", "W2", "token_table", "P", "W"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise InvalidConfig(f"non-finite entries in {name}")

    @property
    def vocab_size(self):
        return self.token_table.shape[0]

    @property
    def embed_dim(self):
        return self.W2.shape[0]

    @property
    def head(self):
        """Bilinear head matrix (identity for aligned models)."""
        return np.eye(self.embed_dim) if self.W is None else self.W

    def params(self):
        out = {"W1": self.W1, "b1": self.b1, "W2": self.W2, "token_table": self.token_table, "P": self.P}
        if self.W is not None:
            out["W"] = self.W
        return out

    def __eq__(self, other):
        if not isinstance(other, RetrievalModel):
            return NotImplemented
        a, b = self.params(), other.params()
        return (
            self.kind == other.kind
            and tuple(self.image_shape) == tuple(other.image_shape)
            and a.keys() == b.keys()
            and all(a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a)
        )

    __hash__ = object.__hash__


def init_model(kind, image_shape=(16, 16), vocab_size=256, cfg=ModelConfig(), seed=0):
    rng = np.random.default_rng(seed)
    hw = image_shape[0] * image_shape[1]
    h, d, de = cfg.hidden, cfg.embed_dim, cfg.token_dim
    return RetrievalModel(
        kind=kind,
        W1=rng.normal(0.0, 1.0 / np.sqrt(hw), size=(h, hw)),
        b1=np.zeros(h),
        W2=rng.normal(0.0, 1.0 / np.sqrt(h), size=(d, h)),
        token_table=rng.normal(0.0, cfg.token_init_scale, size=(vocab_size, de)),
        P=rng.normal(0.0, 1.0 / (cfg.token_init_scale * np.sqrt(de)), size=(d, de)),
        W=np.eye(d) if kind == FUSED else None,
        image_shape=tuple(image_shape),
    )


# -- encoders -----------------------------------------------------------------


def _flat_images(m, v):
    v = np.asarray(v, dtype=np.float64)
    hw = m.W1.shape[1]
    if v.ndim >= 2 and v.shape[-2:] == tuple(m.image_shape):
        return v.reshape(-1, hw)
    if v.ndim == 2 and v.shape[1] == hw:
        return v
    raise ShapeMismatch(f"image shape {v.shape} does not match model input {m.image_shape}")


def image_hidden(m, v):
    """Hidden activations tanh(W1 x + b1) for a batch (n, H, W) or flat (n, H*W)."""
    x = _flat_images(m, v)
    return np.tanh(rowwise_matmul(x, m.W1) + m.b1)


def encode_images(m, v):
    return rowwise_matmul(image_hidden(m, v), m.W2)


def encode_image(m, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != tuple(m.image_shape):
        raise ShapeMismatch(f"image shape {v.shape} does not match model input {m.image_shape}")
    return encode_images(m, v[None])[0]


def _check_tokens(m, tokens):
    tokens = np.asarray(tokens)
    if tokens.size == 0:
        raise TokenOutOfRange("empty token sequence")
    if tokens.min() < 0 or tokens.max() >= m.vocab_size:
        raise TokenOutOfRange(f"token id outside [0, {m.vocab_size})")
    return tokens


def encode_texts(m, captions):
    """Embeddings for a (n, L) array of equal-length captions."""
    captions = np.atleast_2d(_check_tokens(m, captions))
    # sorted ids fix the summation order, so reordered captions embed bit-identically
    mean_tok = m.token_table[np.sort(captions, axis=-1)].mean(axis=-2)
    return rowwise_matmul(mean_tok, m.P)


def encode_text(m, t):
    t = _check_tokens(m, t)
    if t.ndim != 1:
        raise ShapeMismatch("encode_text takes one token sequence")
    return encode_texts(m, t[None])[0]


def score_embeddings(m, img_emb, txt_emb):
    """Score matrix between rows of ``img_emb`` (a, d) and ``txt_emb`` (b, d)."""
    ni = normalize_rows(np.atleast_2d(img_emb))
    nt = normalize_rows(np.atleast_2d(txt_emb))
    if m.W is None:
        return np.clip(rowwise_matmul(ni, nt), -1.0, 1.0)
    return rowwise_matmul(rowwise_matmul(ni, m.W.T), nt)


def score(m, v, t):
    return float(score_embeddings(m, encode_image(m, v)[None], encode_text(m, t)[None])[0, 0])


# -- ranking ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RankedList:
    """Gallery indices ordered by descending score, ties by ascending index."""

    indices: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.indices)

    def top(self, n):
        return self.indices[: max(0, min(n, len(self.indices)))]

    def entries(self):
        return list(zip(self.indices.tolist(), self.scores.tolist()))


def ranked_from_scores(scores):
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    return RankedList(indices=order.astype(np.int64), scores=scores[order])


class GalleryIndex:
    """Cached gallery embeddings of one dataset under one model."""

    def __init__(self, m, d):
        self.model = m
        self.dataset = d
        self.image_emb = encode_images(m, d.images)
        self.caption_emb = encode_texts(m, d.captions)

    def scores_for_image(self, v):
        return score_embeddings(self.model, encode_image(self.model, v)[None], self.caption_emb)[0]

    def scores_for_text(self, t):
        return score_embeddings(self.model, self.image_emb, encode_text(self.model, t)[None])[:, 0]


_index_cache = weakref.WeakKeyDictionary()


def gallery_index(m, d):
    per_model = _index_cache.setdefault(m, {})
    hit = per_model.get(id(d))
    if hit is None or hit.dataset is not d:
        hit = GalleryIndex(m, d)
        per_model[id(d)] = hit
    return hit


def rank(m, query, d, direction):
    """Rank the opposite-modality side of gallery ``d`` against ``query``."""
    idx = gallery_index(m, d)
    if direction == I2T:
        return ranked_from_scores(idx.scores_for_image(query))
    if direction == T2I:
        return ranked_from_scores(idx.scores_for_text(query))
    raise ValueError(f"unknown direction {direction!r}")


# -- training -----------------------------------------------------------------


def _unit_backward(x, unit, g):
    """Backprop through x -> x / |x| row-wise."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return (g - unit * np.sum(g * unit, axis=1, keepdims=True)) / norms


def contrastive_loss_and_grads(m, images, captions, temperature):
    """Symmetric InfoNCE over in-batch pairs; returns (loss, grads by param name)."""
    b = images.shape[0]
    x = _flat_images(m, images)
    a = np.tanh(x @ m.W1.T + m.b1)
    e = a @ m.W2.T
    tok = m.token_table[captions]
    mean_tok = tok.mean(axis=1)
    u = mean_tok @ m.P.T
    ne, nu = normalize_rows(e), normalize_rows(u)
    head = m.head
    logits = ne @ head @ nu.T / temperature

    def log_softmax(z, axis):
        z = z - z.max(axis=axis, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    lr_rows, lr_cols = log_softmax(logits, 1), log_softmax(logits, 0)
    diag = np.arange(b)
    loss = -0.5 * (lr_rows[diag, diag].mean() + lr_cols[diag, diag].mean())

    eye = np.eye(b)
    dlogits = 0.5 * ((np.exp(lr_rows) - eye) + (np.exp(lr_cols) - eye)) / b
    ds = dlogits / temperature
    dne = ds @ nu @ head.T
    dnu = ds.T @ ne @ head
    de = _unit_backward(e, ne, dne)
    du = _unit_backward(u, nu, dnu)

    grads = {}
    grads["W2"] = de.T @ a
    dz = (de @ m.W2) * (1.0 - a * a)
    grads["W1"] = dz.T @ x
    grads["b1"] = dz.sum(axis=0)
    grads["P"] = du.T @ mean_tok
    dmean = du @ m.P
    dtable = np.zeros_like(m.token_table)
    length = captions.shape[1]
    np.add.at(dtable, captions.reshape(-1), np.repeat(dmean / length, length, axis=0))
    grads["token_table"] = dtable
    if m.W is not None:
        grads["W"] = ne.T @ ds @ nu
    return float(loss), grads


def train_contrastive(m, d, hyper=TrainConfig(), seed=0):
    """Minibatch heavy-ball gradient descent on the symmetric InfoNCE objective.

    Each step draws ``batch_size`` distinct images and one ground-truth
    caption per image; the other in-batch captions act as negatives.
    """
    if d.n_images == 0:
        raise InvalidConfig("cannot train on an empty dataset")
    if hyper.lr_decay not in ("linear", "none"):
        raise InvalidConfig(f"unknown lr_decay {hyper.lr_decay!r}")
    rng = np.random.default_rng(seed)
    params = {k: v.copy() for k, v in m.params().items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    b = min(hyper.batch_size, d.n_images)
    cur = m
    for step in range(hyper.steps):
        img_idx = rng.choice(d.n_images, size=b, replace=False)
        cap_pick = rng.integers(0, d.captions_per_image, size=b)
        caps = d.captions[d.match_map[img_idx, cap_pick]]
        loss, grads = contrastive_loss_and_grads(cur, d.images[img_idx], caps, hyper.temperature)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise DivergedTraining(f"non-finite loss at step {step}")
        lr = hyper.lr * (1.0 - step / hyper.steps) if hyper.lr_decay == "linear" else hyper.lr
        for k, g in grads.items():
            velocity[k] = hyper.momentum * velocity[k] + g
            params[k] -= lr * velocity[k]
        cur = replace(cur, **params)
        if step % 500 == 0:
            log.debug("step %d loss %.4f", step, loss)
    return cur


# -- checkpoints --------------------------------------------------------------


def model_to_bytes(m):
    meta = {"kind": m.kind, "image_shape": list(m.image_shape)}
    return container.encode(MODEL_KIND, MODEL_VERSION, meta, m.params())


def model_from_bytes(blob):
    meta, arrays = container.decode(MODEL_KIND, MODEL_VERSION, blob)
    try:
        return RetrievalModel(kind=meta["kind"], image_shape=tuple(meta["image_shape"]), **arrays)
    except (KeyError, TypeError) as exc:
        raise IoError(f"checkpoint missing field: {exc}") from exc


def save_model(m, path):
    container.write_file(path, model_to_bytes(m))


def load_model(path):
    return model_from_bytes(container.read_file(path))


def _from_dict(cls, raw):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"unknown {cls.__name__} option(s): {sorted(unknown)}")
    return cls(**{**asdict(cls()), **raw})


def model_config_from_dict(raw):
    return _from_dict(ModelConfig, raw)


def train_config_from_dict(raw):
    return _from_dict(TrainConfig, raw)
