"""Similar-image search: exact scan oracle and a randomized k-d tree forest.

The forest splits each node on a dimension drawn uniformly from the top-5
highest-variance dims of the node's points, at the median (by index, so ties
and duplicate vectors still split evenly).  Queries run best-bin-first across
all trees through one shared priority queue of unexplored branches and stop
after a ``checks`` budget of leaf visits; candidate distances are always
recomputed exactly, so approximation shows up only as missing neighbors,
never as wrong distances.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from imgtriage import kernels

log = logging.getLogger(__name__)

DEFAULT_TREE_COUNT = 8
DEFAULT_LEAF_SIZE = 16
DEFAULT_CHECKS = 256
DEFAULT_K = 50
VARIANCE_POOL = 5  # split dim drawn from this many top-variance dims

_NODE_BYTES = 32  # split_dim i4 + split_val f4 + left/right i4 + start/end i8


class AnnError(Exception):
    pass


@dataclass
class KdTree:
    split_dim: np.ndarray  # (nodes,) int32, -1 for leaves
    split_val: np.ndarray  # (nodes,) float32
    left: np.ndarray  # (nodes,) int32, -1 for leaves
    right: np.ndarray  # (nodes,) int32
    start: np.ndarray  # (nodes,) int64 into points (leaves only)
    end: np.ndarray  # (nodes,) int64
    points: np.ndarray  # (n,) int64 row ids, permuted

    @property
    def leaf_count(self) -> int:
        return int((self.left < 0).sum())

    @property
    def depth(self) -> int:
        depths = {0: 0}
        best = 0
        for node in range(self.split_dim.shape[0]):
            d = depths[node]
            best = max(best, d)
            if self.left[node] >= 0:
                depths[int(self.left[node])] = d + 1
                depths[int(self.right[node])] = d + 1
        return best

    def nbytes(self) -> int:
        arrays = (self.split_dim, self.split_val, self.left, self.right, self.start, self.end)
        return sum(a.nbytes for a in arrays) + self.points.nbytes


@dataclass
class AnnIndex:
    n: int
    dim: int
    tree_count: int
    leaf_size: int
    checks: int
    seed: int
    trees: tuple[KdTree, ...]
    build_seconds: float = 0.0

    def nbytes(self) -> int:
        return sum(t.nbytes() for t in self.trees)

    @property
    def total_leaves(self) -> int:
        return sum(t.leaf_count for t in self.trees)


@dataclass(frozen=True)
class NeighborList:
    query: int | None  # query row when querying an indexed point, else None
    k: int
    neighbors: tuple[tuple[int, float], ...]  # (row, distance) ascending


@dataclass
class PrecisionReport:
    k: int
    n: int
    dim: int
    sample_size: int
    per_rank_precision: np.ndarray  # (k,) mean |approx[:r] & exact[:r]| / r
    build_seconds: float
    exact_seconds: float
    ann_seconds: float
    matrix_bytes: int
    forest_bytes: int

    def to_csv(self, include_timings: bool = True) -> str:
        # timings are optional so a fixed-seed rerun can emit identical bytes
        lines = [f"# n={self.n} dim={self.dim} k={self.k} sample={self.sample_size}"]
        if include_timings:
            lines.append(
                f"# build_seconds={self.build_seconds:.6f}"
                f" exact_seconds={self.exact_seconds:.6f}"
                f" ann_seconds={self.ann_seconds:.6f}"
            )
        lines.append(f"# matrix_bytes={self.matrix_bytes} forest_bytes={self.forest_bytes}")
        lines.append("rank,precision")
        for r, p in enumerate(self.per_rank_precision, start=1):
            lines.append(f"{r},{p:.6f}")
        return "\n".join(lines) + "\n"


def _check_matrix(vectors) -> np.ndarray:
    m = np.ascontiguousarray(vectors, dtype=np.float32)
    if m.ndim != 2:
        raise AnnError(f"vectors must be 2-D, got shape {m.shape}")
    return m


def exact_knn(vectors, query_row: int, k: int) -> NeighborList:
    """Exact top-k by linear scan, excluding the query row itself."""
    m = _check_matrix(vectors)
    n = m.shape[0]
    if k <= 0:
        raise AnnError(f"k must be >= 1, got {k}")
    if not 0 <= query_row < n:
        raise AnnError(f"query row {query_row} out of range for {n} vectors")
    sqd = kernels.sqdist_all(m, m[query_row])
    rows = np.arange(n)
    keep = rows != query_row
    return _top_k(rows[keep], sqd[keep], k, query=query_row)


def _top_k(rows: np.ndarray, sqd: np.ndarray, k: int, query: int | None) -> NeighborList:
    order = np.lexsort((rows, sqd))[:k]
    neighbors = tuple(
        (int(rows[i]), float(np.sqrt(sqd[i]))) for i in order
    )
    return NeighborList(query=query, k=k, neighbors=neighbors)


# --- forest build ---------------------------------------------------------


def _build_tree(m: np.ndarray, leaf_size: int, rng: np.random.Generator) -> KdTree:
    n = m.shape[0]
    idx = np.arange(n, dtype=np.int64)
    split_dim: list[int] = []
    split_val: list[float] = []
    left: list[int] = []
    right: list[int] = []
    start: list[int] = []
    end: list[int] = []

    def new_node() -> int:
        split_dim.append(-1)
        split_val.append(0.0)
        left.append(-1)
        right.append(-1)
        start.append(0)
        end.append(0)
        return len(split_dim) - 1

    stack = [(new_node(), 0, n)]
    while stack:
        node, lo, hi = stack.pop()
        if hi - lo <= leaf_size:
            start[node] = lo
            end[node] = hi
            continue
        subset = m[idx[lo:hi]]
        variances = subset.var(axis=0)
        pool = np.argsort(variances, kind="stable")[::-1][: min(VARIANCE_POOL, m.shape[1])]
        dim = int(pool[int(rng.integers(pool.shape[0]))])
        vals = subset[:, dim]
        order = np.argsort(vals, kind="stable")
        mid = (hi - lo) // 2
        idx[lo:hi] = idx[lo:hi][order]
        split_dim[node] = dim
        split_val[node] = float(vals[order[mid]])
        lchild, rchild = new_node(), new_node()
        left[node] = lchild
        right[node] = rchild
        stack.append((lchild, lo, lo + mid))
        stack.append((rchild, lo + mid, hi))

    return KdTree(
        split_dim=np.asarray(split_dim, dtype=np.int32),
        split_val=np.asarray(split_val, dtype=np.float32),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        start=np.asarray(start, dtype=np.int64),
        end=np.asarray(end, dtype=np.int64),
        points=idx,
    )


def build_index(
    vectors,
    tree_count: int = DEFAULT_TREE_COUNT,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    seed: int = 0,
    checks: int = DEFAULT_CHECKS,
) -> AnnIndex:
    """Build the randomized forest; per-tree seed streams derive from ``seed``."""
    m = _check_matrix(vectors)
    if m.shape[0] < 1:
        raise AnnError("cannot index an empty vector set")
    if tree_count < 1:
        raise AnnError(f"tree_count must be >= 1, got {tree_count}")
    if leaf_size < 1:
        raise AnnError(f"leaf_size must be >= 1, got {leaf_size}")
    t0 = time.perf_counter()
    streams = np.random.SeedSequence(seed).spawn(tree_count)
    trees = tuple(_build_tree(m, leaf_size, np.random.default_rng(s)) for s in streams)
    index = AnnIndex(
        n=m.shape[0],
        dim=m.shape[1],
        tree_count=tree_count,
        leaf_size=leaf_size,
        checks=checks,
        seed=seed,
        trees=trees,
        build_seconds=time.perf_counter() - t0,
    )
    return index


# --- queries --------------------------------------------------------------


def query_knn(
    index: AnnIndex,
    vectors,
    query,
    k: int,
    checks: int | None = None,
    exclude_row: int | None = None,
) -> NeighborList:
    """Approximate top-k via best-bin-first traversal over all trees.

    ``checks`` caps leaf visits (None uses the index default; <= 0 means
    exhaustive).  Each tree's leaf containing the query is always visited
    before the shared queue takes over.
    """
    m = _check_matrix(vectors)
    if m.shape[0] != index.n:
        raise AnnError(f"index built over {index.n} vectors, got {m.shape[0]}")
    q = np.ascontiguousarray(query, dtype=np.float32)
    if q.shape != (index.dim,):
        raise AnnError(f"query dim {q.shape} does not match index dim {index.dim}")
    if k <= 0:
        raise AnnError(f"k must be >= 1, got {k}")
    budget = index.checks if checks is None else checks
    exhaustive = budget <= 0

    visited = np.zeros(index.n, dtype=bool)
    candidates: list[np.ndarray] = []
    heap: list[tuple[float, int, int]] = []
    visits = 0

    def descend(tree_id: int, node: int, bound: float) -> None:
        nonlocal visits
        tree = index.trees[tree_id]
        while tree.left[node] >= 0:
            dim = int(tree.split_dim[node])
            diff = float(q[dim]) - float(tree.split_val[node])
            if diff < 0.0:
                near, far = int(tree.left[node]), int(tree.right[node])
            else:
                near, far = int(tree.right[node]), int(tree.left[node])
            heapq.heappush(heap, (bound + diff * diff, tree_id, far))
            node = near
        rows = tree.points[int(tree.start[node]) : int(tree.end[node])]
        fresh = rows[~visited[rows]]
        if fresh.size:
            visited[fresh] = True
            candidates.append(fresh)
        visits += 1

    for tree_id in range(index.tree_count):
        descend(tree_id, 0, 0.0)
    while heap and (exhaustive or visits < budget):
        bound, tree_id, node = heapq.heappop(heap)
        descend(tree_id, node, bound)

    rows = np.concatenate(candidates) if candidates else np.empty(0, dtype=np.int64)
    if exclude_row is not None:
        rows = rows[rows != exclude_row]
    sqd = kernels.sqdist_gather(m, q, rows)
    return _top_k(rows, sqd, k, query=exclude_row)


def knn_of_row(index: AnnIndex, vectors, row: int, k: int, checks: int | None = None) -> NeighborList:
    """Approximate neighbors of an indexed point, excluding itself."""
    m = _check_matrix(vectors)
    if not 0 <= row < m.shape[0]:
        raise AnnError(f"query row {row} out of range for {m.shape[0]} vectors")
    return query_knn(index, m, m[row], k, checks=checks, exclude_row=row)


# --- evaluation -----------------------------------------------------------


def estimate_memory(
    n: int, tree_count: int = DEFAULT_TREE_COUNT, leaf_size: int = DEFAULT_LEAF_SIZE
) -> tuple[int, int]:
    """(full similarity matrix bytes, forest structure bytes) for n points.

    The matrix cost is n^2 float32; the forest cost counts per-tree node and
    ordinal arrays only, since both approaches share the vectors themselves.
    """

    def leaves(count: int) -> int:
        if count <= leaf_size:
            return 1
        return leaves(count // 2) + leaves(count - count // 2)

    matrix_bytes = 4 * n * n
    n_leaves = leaves(n)
    nodes = 2 * n_leaves - 1
    forest_bytes = tree_count * (8 * n + _NODE_BYTES * nodes)
    return matrix_bytes, forest_bytes


def precision_at_k(
    vectors,
    index: AnnIndex,
    k: int = DEFAULT_K,
    sample_size: int | None = None,
    seed: int = 0,
    checks: int | None = None,
) -> PrecisionReport:
    """Compare the forest against the exact oracle on sampled queries.

    Per-rank precision at rank r is |approx[:r] & exact[:r]| / r averaged over
    the sample.
    """
    m = _check_matrix(vectors)
    n = m.shape[0]
    if n < 2:
        raise AnnError("need at least 2 vectors to evaluate")
    k = min(k, n - 1)
    if sample_size is None:
        sample_size = min(100, n)
    if sample_size > n:
        raise AnnError(f"sample_size {sample_size} exceeds {n} vectors")
    rng = np.random.default_rng(seed)
    queries = rng.permutation(n)[:sample_size]

    overlaps = np.zeros(k, dtype=np.float64)
    exact_seconds = 0.0
    ann_seconds = 0.0
    for row in queries:
        t0 = time.perf_counter()
        exact = exact_knn(m, int(row), k)
        t1 = time.perf_counter()
        approx = knn_of_row(index, m, int(row), k, checks=checks)
        t2 = time.perf_counter()
        exact_seconds += t1 - t0
        ann_seconds += t2 - t1
        exact_ids = [row_id for row_id, _ in exact.neighbors]
        approx_ids = [row_id for row_id, _ in approx.neighbors]
        exact_prefix: set[int] = set()
        approx_prefix: set[int] = set()
        for r in range(k):
            if r < len(exact_ids):
                exact_prefix.add(exact_ids[r])
            if r < len(approx_ids):
                approx_prefix.add(approx_ids[r])
            overlaps[r] += len(exact_prefix & approx_prefix) / (r + 1)

    matrix_bytes, forest_bytes = estimate_memory(n, index.tree_count, index.leaf_size)
    return PrecisionReport(
        k=k,
        n=n,
        dim=index.dim,
        sample_size=sample_size,
        per_rank_precision=overlaps / max(1, sample_size),
        build_seconds=index.build_seconds,
        exact_seconds=exact_seconds,
        ann_seconds=ann_seconds,
        matrix_bytes=matrix_bytes,
        forest_bytes=forest_bytes,
    )
