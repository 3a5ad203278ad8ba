"""Pure-numpy distance kernels.

Fallback used when the compiled extension is unavailable.  Inputs are float32
(storage format); every accumulation happens in float64.  Ties in
``assign_points`` resolve to the lowest centroid index.
"""

from __future__ import annotations

import numpy as np

# Rows of the point chunk kept resident in float64 at once.
_CHUNK_ROWS = 4096


def _matrix(x, name: str) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _vector(x, dim: int, name: str) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float32)
    if a.ndim != 1 or a.shape[0] != dim:
        raise ValueError(f"{name} must be a vector of dim {dim}, got shape {a.shape}")
    return a


def sqdist_all(points, query) -> np.ndarray:
    """Squared Euclidean distance from ``query`` to every row of ``points``."""
    p = _matrix(points, "points")
    q = _vector(query, p.shape[1], "query")
    d = p.astype(np.float64) - q.astype(np.float64)
    return (d * d).sum(axis=1)


def sqdist_gather(points, query, rows) -> np.ndarray:
    """Squared Euclidean distance from ``query`` to the selected rows.

    Bit-identical to ``sqdist_all(points, query)[rows]``: the gathered rows go
    through the same float64 reduction.
    """
    p = _matrix(points, "points")
    q = _vector(query, p.shape[1], "query")
    idx = np.asarray(rows, dtype=np.int64)
    d = p[idx].astype(np.float64) - q.astype(np.float64)
    return (d * d).sum(axis=1)


def assign_points(points, centroids) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point: (labels int32, squared distances float64).

    Uses the ||p||^2 + ||c||^2 - 2 p.c expansion in float64 so the inner
    product runs through BLAS; distances are clamped at zero against rounding.
    """
    p = _matrix(points, "points")
    c = _matrix(centroids, "centroids")
    if p.shape[1] != c.shape[1]:
        raise ValueError(f"dim mismatch: points {p.shape[1]} vs centroids {c.shape[1]}")
    n = p.shape[0]
    c64 = c.astype(np.float64)
    c_sq = (c64 * c64).sum(axis=1)
    labels = np.empty(n, dtype=np.int32)
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK_ROWS):
        chunk = p[start : start + _CHUNK_ROWS].astype(np.float64)
        d2 = (chunk * chunk).sum(axis=1)[:, None] + c_sq[None, :] - 2.0 * (chunk @ c64.T)
        np.maximum(d2, 0.0, out=d2)
        lab = d2.argmin(axis=1)
        labels[start : start + _CHUNK_ROWS] = lab
        dists[start : start + _CHUNK_ROWS] = d2[np.arange(d2.shape[0]), lab]
    return labels, dists
