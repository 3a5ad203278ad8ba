"""K-means over representative feature vectors.

Lloyd iterations with k-means++ seeding, empty-cluster repair by seizing the
point farthest from its centroid, and per-cluster summaries (size expanded
through dedup groups, medoid, closest samples) that drive the review workflow.

Determinism: the seed stream is tied to stable ordinals, not row order, so
permuting the input rows yields identical assignments; the assignment kernel
writes per-point results, so worker count cannot change the outcome.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from imgtriage import kernels
from imgtriage.ingest import DedupGroup

log = logging.getLogger(__name__)

DEFAULT_K = 150
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-4
DEFAULT_SAMPLE_SIZE = 25

MODEL_MAGIC = "KMEANS1"


class KMeansError(Exception):
    pass


@dataclass
class ClusterModel:
    k: int
    dim: int
    centroids: np.ndarray  # (k, dim) float32
    ordinals: np.ndarray  # (n,) int64, stable ids for the input rows
    labels: np.ndarray  # (n,) int32, aligned with ordinals
    sqdists: np.ndarray  # (n,) float64, squared distance to assigned centroid
    inertia: float
    iterations_run: int
    seed: int
    inertia_history: tuple[float, ...] = ()

    def assignment(self) -> dict[int, int]:
        return {int(o): int(c) for o, c in zip(self.ordinals, self.labels)}


@dataclass(frozen=True)
class ClusterSummary:
    cluster_index: int
    size_representatives: int
    size_total_images: int
    medoid_image_id: str
    sample_image_ids: tuple[str, ...]


def resolve_k(n_vectors: int, requested: int | None) -> int:
    """Default cluster count: 150, capped at the number of vectors."""
    if requested is not None:
        return requested
    return min(DEFAULT_K, n_vectors)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ (D^2 weighting) seeding via inverse-CDF draws."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float32)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    if k == 1:
        return centroids
    closest = kernels.sqdist_all(x, centroids[0])
    for j in range(1, k):
        total = float(closest.sum())
        if total > 0.0:
            u = float(rng.random()) * total
            idx = int(np.searchsorted(np.cumsum(closest), u, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))  # all mass at zero: duplicates of chosen points
        centroids[j] = x[idx]
        closest = np.minimum(closest, kernels.sqdist_all(x, centroids[j]))
    return centroids


def _update_centroids(
    x: np.ndarray, labels: np.ndarray, k: int, previous: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster means with float64 sums accumulated in fixed chunk order.

    Empty clusters keep their previous centroid (repair handles them next).
    """
    dim = x.shape[1]
    sums = np.zeros((k, dim), dtype=np.float64)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    chunk = 4096
    for start in range(0, x.shape[0], chunk):
        lab = labels[start : start + chunk]
        onehot = np.zeros((k, lab.shape[0]), dtype=np.float64)
        onehot[lab, np.arange(lab.shape[0])] = 1.0
        sums += onehot @ x[start : start + chunk].astype(np.float64)
    centroids = previous.astype(np.float64).copy()
    nonzero = counts > 0
    centroids[nonzero] = sums[nonzero] / counts[nonzero, None]
    return centroids.astype(np.float32), counts


def _repair_empty(
    centroids: np.ndarray, counts: np.ndarray, x: np.ndarray, sqdists: np.ndarray
) -> np.ndarray:
    """Re-seed each empty cluster with the point farthest from its centroid."""
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return centroids
    order = np.argsort(-sqdists, kind="stable")  # farthest first, ties to lowest row
    taken = 0
    for j in empties:
        if taken >= order.size:
            break
        row = int(order[taken])
        centroids[j] = x[row]
        taken += 1
        log.debug("repaired empty cluster %d with row %d", int(j), row)
    return centroids


def kmeans_fit(
    vectors,
    k: int,
    seed: int = 0,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    ordinals: Sequence[int] | None = None,
) -> ClusterModel:
    """Fit k-means and return a model whose assignments are argmin-optimal.

    ``vectors`` is an (n, dim) array or a sequence of equal-dim vectors;
    ``ordinals`` are stable per-row ids (defaults to row numbers).  The fit is
    a pure function of (vectors keyed by ordinal, k, seed).
    """
    if isinstance(vectors, np.ndarray):
        x = np.ascontiguousarray(vectors, dtype=np.float32)
        if x.ndim != 2:
            raise KMeansError(f"vectors must be 2-D, got shape {x.shape}")
    else:
        rows = [np.asarray(v, dtype=np.float32) for v in vectors]
        dims = {r.shape for r in rows}
        if len(dims) > 1:
            raise KMeansError(f"mixed vector dims: {sorted(d[0] for d in dims)}")
        x = np.vstack(rows) if rows else np.zeros((0, 0), dtype=np.float32)
    n = x.shape[0]
    if k <= 0:
        raise KMeansError(f"k must be >= 1, got {k}")
    if k > n:
        raise KMeansError(f"k={k} exceeds the number of vectors ({n})")

    if ordinals is None:
        ords = np.arange(n, dtype=np.int64)
    else:
        ords = np.asarray(ordinals, dtype=np.int64)
        if ords.shape != (n,):
            raise KMeansError(f"{ords.shape[0] if ords.ndim else 0} ordinals for {n} vectors")
        if np.unique(ords).size != n:
            raise KMeansError("ordinals must be unique")

    # canonical row order keyed by ordinal: permuting the input cannot change
    # the seed stream or the result
    canon = np.argsort(ords, kind="stable")
    xc = np.ascontiguousarray(x[canon])

    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(xc, k, rng)

    labels, sqd = kernels.assign_points(xc, centroids)
    inertia = float(sqd.sum())
    history = [inertia]
    iterations = 0
    for _ in range(max_iters):
        centroids, counts = _update_centroids(xc, labels, k, centroids)
        centroids = _repair_empty(centroids, counts, xc, sqd)
        new_labels, sqd = kernels.assign_points(xc, centroids)
        new_inertia = float(sqd.sum())
        history.append(new_inertia)
        iterations += 1
        converged = bool((new_labels == labels).all())
        labels = new_labels
        if converged:
            break
        if inertia > 0.0 and (inertia - new_inertia) / inertia < tol:
            inertia = new_inertia
            break
        inertia = new_inertia
    inertia = history[-1]

    if not np.isfinite(centroids).all():
        raise KMeansError("fit produced non-finite centroids")

    # map canonical results back to the input row order
    inverse = np.empty(n, dtype=np.int64)
    inverse[canon] = np.arange(n)
    return ClusterModel(
        k=k,
        dim=int(x.shape[1]),
        centroids=centroids,
        ordinals=ords.copy(),
        labels=labels[inverse].astype(np.int32),
        sqdists=sqd[inverse],
        inertia=inertia,
        iterations_run=iterations,
        seed=seed,
        inertia_history=tuple(history),
    )


def assign(model: ClusterModel, vector) -> int:
    """Nearest-centroid cluster index for one vector (ties to lowest index)."""
    v = np.asarray(vector, dtype=np.float32)
    if v.shape != (model.dim,):
        raise KMeansError(f"vector dim {v.shape} does not match model dim {model.dim}")
    labels, _ = kernels.assign_points(v[None, :], model.centroids)
    return int(labels[0])


def summarize_clusters(
    model: ClusterModel,
    rep_ids: Sequence[str],
    groups: Sequence[DedupGroup],
    sample_size: int = DEFAULT_SAMPLE_SIZE,
) -> list[ClusterSummary]:
    """Per-cluster summaries with sizes expanded through dedup frequencies.

    ``rep_ids`` aligns with model rows.  Medoid = member closest to the
    centroid; samples = first ``sample_size`` members by (distance, image_id).
    """
    if len(rep_ids) != model.labels.shape[0]:
        raise KMeansError(f"{len(rep_ids)} rep ids for {model.labels.shape[0]} rows")
    freq = {g.representative_image_id: g.frequency for g in groups}
    members: dict[int, list[tuple[float, str]]] = {c: [] for c in range(model.k)}
    for row, image_id in enumerate(rep_ids):
        members[int(model.labels[row])].append((float(model.sqdists[row]), image_id))
    summaries = []
    for c in range(model.k):
        ranked = sorted(members[c])
        total = sum(freq.get(image_id, 1) for _, image_id in ranked)
        summaries.append(
            ClusterSummary(
                cluster_index=c,
                size_representatives=len(ranked),
                size_total_images=total,
                medoid_image_id=ranked[0][1] if ranked else "",
                sample_image_ids=tuple(i for _, i in ranked[:sample_size]),
            )
        )
    return summaries


def recompute_distances(model: ClusterModel, ordinals, matrix) -> ClusterModel:
    """Fill ``sqdists`` for a model loaded from disk, given the vector set.

    ``ordinals``/``matrix`` come from the vectors file; rows are matched to the
    model's assignment ordinals.
    """
    row_by_ordinal = {int(o): i for i, o in enumerate(np.asarray(ordinals))}
    try:
        rows = np.array([row_by_ordinal[int(o)] for o in model.ordinals], dtype=np.int64)
    except KeyError as exc:
        raise KMeansError(f"vectors file is missing ordinal {exc}") from exc
    x = np.ascontiguousarray(np.asarray(matrix, dtype=np.float32)[rows])
    sqd = np.empty(x.shape[0], dtype=np.float64)
    for c in range(model.k):
        mask = model.labels == c
        if mask.any():
            sqd[mask] = kernels.sqdist_all(x[mask], model.centroids[c])
    model.sqdists = sqd
    return model


# --- model file (KMEANS1) -------------------------------------------------


def write_model(model: ClusterModel, path: str | Path) -> None:
    """Header line, centroid rows as little-endian float32, then
    (8-byte ordinal, 4-byte cluster) assignment pairs."""
    with open(path, "wb") as fh:
        header = (
            f"{MODEL_MAGIC} k={model.k} dim={model.dim} seed={model.seed}"
            f" inertia={model.inertia!r}\n"
        )
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(model.centroids, dtype="<f4").tobytes())
        for ordinal, label in zip(model.ordinals, model.labels):
            fh.write(struct.pack("<Qi", int(ordinal), int(label)))


def read_model(path: str | Path) -> ClusterModel:
    data = Path(path).read_bytes()
    header_end = data.find(b"\n")
    if header_end < 0:
        raise KMeansError(f"{path}: missing model header")
    header = data[:header_end].decode("ascii", errors="replace").split()
    if not header or header[0] != MODEL_MAGIC:
        raise KMeansError(f"{path}: bad model magic {header[:1]!r}")
    try:
        fields = dict(part.split("=", 1) for part in header[1:])
        k, dim, seed = int(fields["k"]), int(fields["dim"]), int(fields["seed"])
        inertia = float(fields["inertia"])
    except (ValueError, KeyError) as exc:
        raise KMeansError(f"{path}: malformed model header: {exc}") from exc
    body = data[header_end + 1 :]
    centroid_bytes = k * dim * 4
    if len(body) < centroid_bytes or (len(body) - centroid_bytes) % 12 != 0:
        raise KMeansError(f"{path}: truncated model body ({len(body)} bytes)")
    centroids = np.frombuffer(body, dtype="<f4", count=k * dim).reshape(k, dim).copy()
    n = (len(body) - centroid_bytes) // 12
    ordinals = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int32)
    for i in range(n):
        ordinal, label = struct.unpack_from("<Qi", body, centroid_bytes + i * 12)
        if not 0 <= label < k:
            raise KMeansError(f"{path}: assignment {i} has cluster {label} outside [0,{k})")
        ordinals[i] = ordinal
        labels[i] = label
    return ClusterModel(
        k=k,
        dim=dim,
        centroids=centroids,
        ordinals=ordinals,
        labels=labels,
        sqdists=np.zeros(n, dtype=np.float64),
        inertia=inertia,
        iterations_run=0,
        seed=seed,
    )
