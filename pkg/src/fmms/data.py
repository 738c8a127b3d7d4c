"""Synthetic paired image-caption gallery and its on-disk format."""

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import container
from .errors import InvalidConfig, IoError

DATASET_KIND = "DATASET"
DATASET_VERSION = 1
CLASS_TOKEN_FRACTION = 0.8


@dataclass(frozen=True)
class DataConfig:
    classes: int = 20
    images: int = 200
    captions_per_image: int = 5
    height: int = 16
    width: int = 16
    vocab_size: int = 256
    caption_length: int = 8
    image_noise: float = 0.15
    class_token_pool_size: int = 8

    def validate(self):
        if self.classes < 2 or self.images < self.classes:
            raise InvalidConfig("need images >= classes >= 2")
        if self.captions_per_image < 1:
            raise InvalidConfig("captions_per_image must be >= 1")
        if self.height < 2 or self.width < 2:
            raise InvalidConfig("images must be at least 2x2")
        if self.caption_length < 1:
            raise InvalidConfig("caption_length must be >= 1")
        if self.class_token_pool_size < 1:
            raise InvalidConfig("class_token_pool_size must be >= 1")
        if self.vocab_size < 4 * self.class_token_pool_size:
            raise InvalidConfig("vocab_size must be >= 4 * class_token_pool_size")
        if self.classes * self.class_token_pool_size >= self.vocab_size:
            raise InvalidConfig("class token pools leave no common tokens")
        if not 0.0 <= self.image_noise <= 1.0:
            raise InvalidConfig("image_noise must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Gallery of images and captions.

    ``images`` has shape (n, H, W) with values in [0, 1]; ``captions`` has
    shape (n * M, L) of token ids.  ``match_map[i]`` lists the M caption
    indices belonging to image ``i`` and ``class_of[i]`` its class id.
    """

    images: np.ndarray
    captions: np.ndarray
    match_map: np.ndarray
    class_of: np.ndarray
    vocab_size: int

    def __post_init__(self):
        n = self.images.shape[0]
        if self.images.ndim != 3 or self.captions.ndim != 2:
            raise InvalidConfig("images must be (n, H, W), captions (n*M, L)")
        if self.match_map.shape[0] != n or self.class_of.shape != (n,):
            raise InvalidConfig("match_map/class_of do not cover every image")
        m = self.match_map.shape[1]
        if self.captions.shape[0] != m * n:
            raise InvalidConfig("|T_all| must equal M * |V_all|")
        flat = np.sort(self.match_map.reshape(-1))
        if not np.array_equal(flat, np.arange(m * n)):
            raise InvalidConfig("every caption must belong to exactly one image")
        if self.captions.size and (self.captions.min() < 0 or self.captions.max() >= self.vocab_size):
            raise InvalidConfig("caption token out of vocabulary")
        owner = np.empty(m * n, dtype=np.int64)
        for i, caps in enumerate(self.match_map):
            owner[caps] = i
        object.__setattr__(self, "caption_owner", owner)

    @property
    def n_images(self):
        return self.images.shape[0]

    @property
    def n_captions(self):
        return self.captions.shape[0]

    @property
    def captions_per_image(self):
        return self.match_map.shape[1]

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and _same(self.images, other.images)
            and _same(self.captions, other.captions)
            and _same(self.match_map, other.match_map)
            and _same(self.class_of, other.class_of)
        )


def _same(a, b):
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


def generate_dataset(cfg=DataConfig(), seed=0):
    """Class-structured synthetic gallery, deterministic in ``seed``.

    Each class owns a prototype pixel pattern and a disjoint pool of tokens.
    Images are prototype plus uniform noise; each caption token comes from
    the owning class pool with probability 0.8, else from the shared pool.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    c, n, m = cfg.classes, cfg.images, cfg.captions_per_image
    h, w, length, p = cfg.height, cfg.width, cfg.caption_length, cfg.class_token_pool_size

    prototypes = rng.uniform(0.0, 1.0, size=(c, h, w))
    class_of = np.arange(n, dtype=np.int64) % c
    noise = rng.uniform(-cfg.image_noise, cfg.image_noise, size=(n, h, w))
    images = np.clip(prototypes[class_of] + noise, 0.0, 1.0)

    common = np.arange(c * p, cfg.vocab_size, dtype=np.int64)
    caption_class = np.repeat(class_of, m)
    from_class = rng.random((n * m, length)) < CLASS_TOKEN_FRACTION
    class_tok = caption_class[:, None] * p + rng.integers(0, p, size=(n * m, length))
    common_tok = common[rng.integers(0, common.size, size=(n * m, length))]
    captions = np.where(from_class, class_tok, common_tok).astype(np.int64)

    match_map = np.arange(n * m, dtype=np.int64).reshape(n, m)
    return Dataset(images=images, captions=captions, match_map=match_map, class_of=class_of, vocab_size=cfg.vocab_size)


def dataset_to_bytes(d):
    arrays = {
        "images": d.images.astype(np.float64, copy=False),
        "captions": d.captions.astype(np.int64, copy=False),
        "match_map": d.match_map.astype(np.int64, copy=False),
        "class_of": d.class_of.astype(np.int64, copy=False),
    }
    return container.encode(DATASET_KIND, DATASET_VERSION, {"vocab_size": int(d.vocab_size)}, arrays)


def dataset_from_bytes(blob):
    meta, arrays = container.decode(DATASET_KIND, DATASET_VERSION, blob)
    try:
        return Dataset(vocab_size=int(meta["vocab_size"]), **arrays)
    except (KeyError, TypeError) as exc:
        raise IoError(f"dataset file missing field: {exc}") from exc


def save_dataset(d, path):
    container.write_file(path, dataset_to_bytes(d))


def load_dataset(path):
    return dataset_from_bytes(container.read_file(path))


def data_config_from_dict(raw):
    known = {f.name for f in fields(DataConfig)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"unknown data option(s): {sorted(unknown)}")
    return DataConfig(**{**asdict(DataConfig()), **raw})
