# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance kernels.

Float32 storage, float64 accumulation, sequential per-row reduction order so
results are reproducible regardless of how work is scheduled.  The centroid
scan early-abandons a candidate once its partial sum exceeds the current best;
that never changes the argmin or the returned distance.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF ABANDON_STRIDE = 64


def sqdist_all(points, query):
    """Squared Euclidean distance from ``query`` to every row of ``points``."""
    cdef const float[:, ::1] p = np.ascontiguousarray(points, dtype=np.float32)
    cdef const float[::1] q = np.ascontiguousarray(query, dtype=np.float32)
    if q.shape[0] != p.shape[1]:
        raise ValueError(f"query must be a vector of dim {p.shape[1]}, got shape ({q.shape[0]},)")
    out = np.empty(p.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, t
    cdef double acc, diff
    for i in range(p.shape[0]):
        acc = 0.0
        for t in range(p.shape[1]):
            diff = <double> p[i, t] - <double> q[t]
            acc += diff * diff
        o[i] = acc
    return out


def sqdist_gather(points, query, rows):
    """Squared Euclidean distance from ``query`` to the selected rows."""
    cdef const float[:, ::1] p = np.ascontiguousarray(points, dtype=np.float32)
    cdef const float[::1] q = np.ascontiguousarray(query, dtype=np.float32)
    cdef const long long[::1] idx = np.ascontiguousarray(rows, dtype=np.int64)
    if q.shape[0] != p.shape[1]:
        raise ValueError(f"query must be a vector of dim {p.shape[1]}, got shape ({q.shape[0]},)")
    out = np.empty(idx.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, t, r
    cdef double acc, diff
    for i in range(idx.shape[0]):
        r = <Py_ssize_t> idx[i]
        if r < 0 or r >= p.shape[0]:
            raise IndexError(f"row {r} out of range for {p.shape[0]} points")
        acc = 0.0
        for t in range(p.shape[1]):
            diff = <double> p[r, t] - <double> q[t]
            acc += diff * diff
        o[i] = acc
    return out


def assign_points(points, centroids):
    """Nearest centroid per point: (labels int32, squared distances float64)."""
    cdef const float[:, ::1] p = np.ascontiguousarray(points, dtype=np.float32)
    cdef const float[:, ::1] c = np.ascontiguousarray(centroids, dtype=np.float32)
    if p.shape[1] != c.shape[1]:
        raise ValueError(f"dim mismatch: points {p.shape[1]} vs centroids {c.shape[1]}")
    labels = np.empty(p.shape[0], dtype=np.int32)
    dists = np.empty(p.shape[0], dtype=np.float64)
    cdef int[::1] lab = labels
    cdef double[::1] dst = dists
    cdef Py_ssize_t n = p.shape[0], k = c.shape[0], d = p.shape[1]
    cdef Py_ssize_t i, j, t, stop, block
    cdef double acc, diff, best
    cdef int best_j
    for i in range(n):
        best = np.inf
        best_j = 0
        for j in range(k):
            acc = 0.0
            block = 0
            while block < d:
                stop = block + ABANDON_STRIDE
                if stop > d:
                    stop = d
                for t in range(block, stop):
                    diff = <double> p[i, t] - <double> c[j, t]
                    acc += diff * diff
                if acc > best:
                    break
                block = stop
            if acc < best:
                best = acc
                best_j = <int> j
        lab[i] = best_j
        dst[i] = best
    return labels, dists
