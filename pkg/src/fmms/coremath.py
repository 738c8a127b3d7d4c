"""Small dense-vector kernel: normalization, cosine and a central-difference oracle."""

import numpy as np

from .errors import NonFinite, ZeroVector

ZERO_NORM = 1e-12


def normalize(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not n > ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector with norm {n:.3g}")
    return v / n


def normalize_rows(x):
    """Row-wise normalize a 2-D array; raises ZeroVector if any row is degenerate."""
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(~(n > ZERO_NORM)):
        raise ZeroVector("degenerate embedding row")
    return x / n


def rowwise_matmul(x, w, chunk=64):
    """``x @ w.T`` for 2-D ``x``, each output row computed independently of the others.

    BLAS may round a row differently depending on the batch it sits in.  Here
    equal input rows always give bit-equal outputs, which keeps ranking ties
    exact between batched and single-item scoring.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    out = np.empty((x.shape[0], w.shape[0]))
    for i in range(0, x.shape[0], chunk):
        out[i : i + chunk] = (x[i : i + chunk, None, :] * w[None, :, :]).sum(axis=-1)
    return out


def cosine(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if not (na > ZERO_NORM and nb > ZERO_NORM):
        raise ZeroVector("cosine of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_grad(a, b):
    """Gradient of cosine(a, b) with respect to a."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if not (na > ZERO_NORM and nb > ZERO_NORM):
        raise ZeroVector("cosine of a zero vector")
    ua, ub = a / na, b / nb
    return (ub - np.dot(ua, ub) * ua) / na


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of a scalar function, one coordinate at a time.

    ``x`` may have any shape; the result has the same shape.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFinite(f"non-finite evaluation at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
