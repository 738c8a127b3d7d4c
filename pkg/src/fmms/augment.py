"""Anti-aliased scale augmentation.

``scale_image(v, s)`` resamples an image to ``round(H*s) x round(W*s)`` and
back to ``H x W``: area averaging whenever the size shrinks, bilinear
interpolation (half-pixel centres, edge clamped) whenever it grows.  Both
steps are linear and separable, so the composite map is ``R_h @ v @ R_w.T``
for fixed per-axis matrices, and its adjoint is ``R_h.T @ g @ R_w``.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidScale

MIN_SCALE = 0.25
MAX_SCALE = 2.0
DEFAULT_SCALES = (0.5, 0.75, 1.0, 1.25, 1.5)


@dataclass(frozen=True)
class ScaleSet:
    scales: tuple = DEFAULT_SCALES

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        object.__setattr__(self, "scales", scales)
        if not scales:
            raise InvalidScale("scale set is empty")
        for s in scales:
            _check_scale(s)
        if 1.0 not in scales:
            raise InvalidScale("scale set must contain 1.0")

    def __iter__(self):
        return iter(self.scales)

    def __len__(self):
        return len(self.scales)


def _check_scale(s):
    if not MIN_SCALE <= s <= MAX_SCALE:
        raise InvalidScale(f"scale {s} outside [{MIN_SCALE}, {MAX_SCALE}]")


def scaled_size(n, s):
    """round-half-up of n*s, at least 1."""
    return max(1, int(math.floor(n * s + 0.5)))


def area_matrix(n_in, n_out):
    """(n_out, n_in) box-filter weights; each output averages the input span it covers."""
    ratio = n_in / n_out
    m = np.zeros((n_out, n_in))
    for j in range(n_out):
        lo, hi = j * ratio, (j + 1) * ratio
        for i in range(int(math.floor(lo)), min(n_in, int(math.ceil(hi)))):
            overlap = min(hi, i + 1) - max(lo, i)
            if overlap > 0:
                m[j, i] = overlap / ratio
    return m


def bilinear_matrix(n_in, n_out):
    """(n_out, n_in) linear-interpolation weights with half-pixel centres."""
    m = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for j in range(n_out):
        src = min(max((j + 0.5) * ratio - 0.5, 0.0), n_in - 1.0)
        i0 = int(math.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        w = src - i0
        m[j, i0] += 1.0 - w
        m[j, i1] += w
    return m


def _resize_matrix(n_in, n_out):
    if n_out == n_in:
        return np.eye(n_in)
    if n_out < n_in:
        return area_matrix(n_in, n_out)
    return bilinear_matrix(n_in, n_out)


@lru_cache(maxsize=None)
def axis_operator(n, s):
    """Round-trip resampling matrix (n, n) along one axis."""
    _check_scale(s)
    k = scaled_size(n, s)
    op = _resize_matrix(k, n) @ _resize_matrix(n, k)
    op.setflags(write=False)
    return op


def scale_operators(shape, s):
    h, w = shape
    return axis_operator(h, float(s)), axis_operator(w, float(s))


def scale_image(v, s):
    s = float(s)
    _check_scale(s)
    v = np.asarray(v, dtype=np.float64)
    if s == 1.0:
        return v.copy()
    rh, rw = scale_operators(v.shape, s)
    return rh @ v @ rw.T


def scale_image_adjoint(g, s):
    """Transpose of ``scale_image``: maps an output-space gradient back to pixels."""
    s = float(s)
    _check_scale(s)
    g = np.asarray(g, dtype=np.float64)
    if s == 1.0:
        return g.copy()
    rh, rw = scale_operators(g.shape, s)
    return rh.T @ g @ rw


def build_scale_set(v, scales):
    return [scale_image(v, s) for s in scales]
