"""Feature extraction for dedup-group representatives.

Two backends share one vector contract: a built-in deterministic reference
embedder (block color means + edge-orientation histograms) and an external
embedder invoked as a child process, for plugging in a real neural feature
extractor.  Batches that fail are split in half and retried recursively so a
single bad image cannot sink its whole batch.
"""

from __future__ import annotations

import logging
import struct
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from imgtriage.ingest import DedupGroup, ImageRecord

log = logging.getLogger(__name__)

DEFAULT_DIM = 4096
DEFAULT_BATCH_SIZE = 64
BLOCK_GRID = 16  # blocks per image side
FEATURES_PER_BLOCK = 7  # mean R, G, B + 4 edge-orientation bins

VECTORS_MAGIC = b"FVEC1\n"


class EmbeddingError(Exception):
    pass


class VectorsFileError(EmbeddingError):
    """Vectors file failed validation; message carries the byte offset."""


@dataclass(frozen=True)
class EmbedderConfig:
    backend: str = "reference"  # reference | external
    dim: int = DEFAULT_DIM
    batch_size: int = DEFAULT_BATCH_SIZE
    normalize: str = "none"  # none | l2
    command: tuple[str, ...] = ()  # child argv prefix for the external backend

    def __post_init__(self):
        if self.backend not in ("reference", "external"):
            raise ValueError(f"unknown embedder backend: {self.backend!r}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.normalize not in ("none", "l2"):
            raise ValueError(f"unknown normalize mode: {self.normalize!r}")
        if self.backend == "external" and not self.command:
            raise ValueError("external backend requires a command")


@dataclass(frozen=True)
class FeatureVector:
    image_id: str
    values: np.ndarray  # float32, shape (dim,)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class BatchFailure:
    image_id: str
    reason: str


@dataclass
class BatchResult:
    succeeded: list[FeatureVector] = field(default_factory=list)
    failed: list[BatchFailure] = field(default_factory=list)


# --- reference embedder ---------------------------------------------------


def embed_reference(pixels: np.ndarray, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Deterministic embedding of an RGB raster.

    The image is partitioned into a BLOCK_GRID x BLOCK_GRID grid of rectangular
    blocks on the original raster.  Each block contributes its mean R, G, B
    (scaled to [0, 1]) and a 4-bin edge-orientation histogram of gradients
    computed strictly inside the block, so a pixel change can only touch the
    features of its own block.  The concatenated block features are tiled and
    truncated to ``dim``.
    """
    if dim < 2 or dim % 8 != 0:
        raise ValueError(f"dim must be >= 2 and divisible by 8, got {dim}")
    px = np.asarray(pixels)
    if px.ndim != 3 or px.shape[2] != 3:
        raise EmbeddingError(f"expected an RGB raster (h, w, 3), got shape {px.shape}")
    h, w = px.shape[:2]
    if h < 1 or w < 1:
        raise EmbeddingError("empty raster")
    px = px.astype(np.float32) / 255.0
    gray = px.mean(axis=2)

    row_edges = [(i * h) // BLOCK_GRID for i in range(BLOCK_GRID + 1)]
    col_edges = [(j * w) // BLOCK_GRID for j in range(BLOCK_GRID + 1)]
    base = np.zeros(BLOCK_GRID * BLOCK_GRID * FEATURES_PER_BLOCK, dtype=np.float32)
    for bi in range(BLOCK_GRID):
        r0, r1 = row_edges[bi], row_edges[bi + 1]
        for bj in range(BLOCK_GRID):
            c0, c1 = col_edges[bj], col_edges[bj + 1]
            if r1 <= r0 or c1 <= c0:
                continue  # image smaller than the grid: block stays zero
            off = (bi * BLOCK_GRID + bj) * FEATURES_PER_BLOCK
            block = px[r0:r1, c0:c1]
            base[off : off + 3] = block.reshape(-1, 3).mean(axis=0)
            g = gray[r0:r1, c0:c1]
            if g.shape[0] >= 2 and g.shape[1] >= 2:
                gx = (g[:, 1:] - g[:, :-1])[:-1, :]
                gy = (g[1:, :] - g[:-1, :])[:, :-1]
                mag = np.hypot(gx, gy)
                ang = np.mod(np.arctan2(gy, gx), np.pi)
                bins = np.minimum((ang / (np.pi / 4.0)).astype(np.int64), 3)
                hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=4)
                base[off + 3 : off + 7] = (hist / mag.size).astype(np.float32)

    reps = -(-dim // base.shape[0])  # ceil division
    return np.tile(base, reps)[:dim].astype(np.float32)


def load_pixels(path: str | Path) -> np.ndarray:
    """Decode an image file to an RGB uint8 raster."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise EmbeddingError(f"cannot decode image {path}: {exc}") from exc


class ReferenceEmbedder:
    """Batch callable over image ids, backed by :func:`embed_reference`.

    Raises on the first bad image so the whole batch fails, mirroring how a
    batched model inference dies; the recursive splitter isolates the culprit.
    """

    def __init__(self, config: EmbedderConfig, root: str | Path, records: Sequence[ImageRecord]):
        self.config = config
        self.root = Path(root)
        self._path_by_id = {r.image_id: r.path for r in records}

    def __call__(self, image_ids: Sequence[str]) -> list[np.ndarray]:
        out = []
        for image_id in image_ids:
            relpath = self._path_by_id.get(image_id)
            if relpath is None:
                raise EmbeddingError(f"unknown image id: {image_id}")
            out.append(embed_reference(load_pixels(self.root / relpath), self.config.dim))
        return out


# --- recursive batch recovery --------------------------------------------


def embed_batch_recursive(
    batch: Sequence[str], embed_fn: Callable[[Sequence[str]], Sequence[np.ndarray]]
) -> BatchResult:
    """Embed a batch, splitting in half on failure until singletons.

    A failing singleton is recorded as failed, not retried.  Every input id
    ends up in exactly one of ``succeeded`` / ``failed``.
    """
    if not batch:
        return BatchResult()
    try:
        vectors = embed_fn(batch)
    except Exception as exc:
        if len(batch) == 1:
            return BatchResult(failed=[BatchFailure(batch[0], str(exc))])
        mid = len(batch) // 2
        left = embed_batch_recursive(batch[:mid], embed_fn)
        right = embed_batch_recursive(batch[mid:], embed_fn)
        return BatchResult(left.succeeded + right.succeeded, left.failed + right.failed)
    if len(vectors) != len(batch):
        raise EmbeddingError(
            f"embedder returned {len(vectors)} vectors for a batch of {len(batch)}"
        )
    return BatchResult(
        succeeded=[FeatureVector(i, np.asarray(v, np.float32)) for i, v in zip(batch, vectors)]
    )


def embed_representatives(
    groups: Sequence[DedupGroup],
    records: Sequence[ImageRecord],
    config: EmbedderConfig,
    embed_fn: Callable[[Sequence[str]], Sequence[np.ndarray]],
) -> tuple[list[str], np.ndarray, list[BatchFailure]]:
    """Embed every non-excluded group representative in manifest order.

    Returns (representative ids, matrix rows aligned to them, failures).
    """
    by_id = {r.image_id: r for r in records}
    order = {r.image_id: i for i, r in enumerate(records)}
    rep_ids = [
        g.representative_image_id
        for g in groups
        if by_id[g.representative_image_id].excluded == "none"
    ]
    rep_ids.sort(key=lambda i: order[i])

    vectors: dict[str, np.ndarray] = {}
    failures: list[BatchFailure] = []
    for start in range(0, len(rep_ids), config.batch_size):
        result = embed_batch_recursive(rep_ids[start : start + config.batch_size], embed_fn)
        for fv in result.succeeded:
            vectors[fv.image_id] = fv.values
        failures.extend(result.failed)

    ok_ids = [i for i in rep_ids if i in vectors]
    if ok_ids:
        matrix = np.vstack([vectors[i] for i in ok_ids]).astype(np.float32)
    else:
        matrix = np.zeros((0, config.dim), dtype=np.float32)
    if matrix.shape[0] and matrix.shape[1] != config.dim:
        raise EmbeddingError(f"embedder produced dim {matrix.shape[1]}, expected {config.dim}")
    if config.normalize == "l2":
        matrix = l2_normalize(matrix)
    return ok_ids, matrix, failures


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0  # zero vectors stay zero
    return (matrix / norms).astype(np.float32)


def propagate_vectors(
    groups: Sequence[DedupGroup], rep_rows: dict[str, int]
) -> dict[str, int]:
    """Map every group member to its representative's vector row (shared)."""
    missing = [
        g.group_id for g in groups if g.representative_image_id not in rep_rows
    ]
    if missing:
        raise EmbeddingError(
            "missing representative vectors for groups: " + ", ".join(sorted(missing))
        )
    mapping: dict[str, int] = {}
    for g in groups:
        row = rep_rows[g.representative_image_id]
        for member in g.member_ids:
            mapping[member] = row
    return mapping


# --- vectors file (FVEC1) -------------------------------------------------


def write_vectors(path: str | Path, ordinals: Sequence[int], matrix: np.ndarray) -> None:
    """Bit-exact vectors file: magic, ``count=<N> dim=<D>`` header, then rows
    of (8-byte LE unsigned ordinal, D little-endian float32)."""
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {m.shape}")
    if len(ordinals) != m.shape[0]:
        raise ValueError(f"{len(ordinals)} ordinals for {m.shape[0]} rows")
    with open(path, "wb") as fh:
        fh.write(VECTORS_MAGIC)
        fh.write(f"count={m.shape[0]} dim={m.shape[1]}\n".encode("ascii"))
        row_floats = m.astype("<f4", copy=False)
        for i, ordinal in enumerate(ordinals):
            fh.write(struct.pack("<Q", int(ordinal)))
            fh.write(row_floats[i].tobytes())


def read_vectors(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read and validate a vectors file -> (ordinals int64, matrix float32).

    Validation errors name the byte offset of the malformed region.
    """
    data = Path(path).read_bytes()
    if not data.startswith(VECTORS_MAGIC):
        raise VectorsFileError(f"{path}: bad magic at byte offset 0")
    header_end = data.find(b"\n", len(VECTORS_MAGIC))
    if header_end < 0:
        raise VectorsFileError(f"{path}: missing header line at byte offset {len(VECTORS_MAGIC)}")
    header = data[len(VECTORS_MAGIC) : header_end].decode("ascii", errors="replace")
    try:
        fields = dict(part.split("=", 1) for part in header.split())
        count, dim = int(fields["count"]), int(fields["dim"])
    except (ValueError, KeyError) as exc:
        raise VectorsFileError(
            f"{path}: malformed header {header!r} at byte offset {len(VECTORS_MAGIC)}"
        ) from exc
    if count < 0 or dim < 1:
        raise VectorsFileError(f"{path}: invalid header counts {header!r}")
    body = data[header_end + 1 :]
    row_bytes = 8 + 4 * dim
    if len(body) != count * row_bytes:
        raise VectorsFileError(
            f"{path}: expected {count * row_bytes} body bytes, found {len(body)}"
            f" at byte offset {header_end + 1}"
        )
    ordinals = np.empty(count, dtype=np.int64)
    matrix = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        off = i * row_bytes
        (ordinal,) = struct.unpack_from("<Q", body, off)
        ordinals[i] = ordinal
        matrix[i] = np.frombuffer(body, dtype="<f4", count=dim, offset=off + 8)
    bad = ~np.isfinite(matrix)
    if bad.any():
        row = int(np.argwhere(bad.any(axis=1))[0][0])
        offset = header_end + 1 + row * row_bytes
        raise VectorsFileError(
            f"{path}: non-finite value in row {row} (ordinal {int(ordinals[row])})"
            f" at byte offset {offset}"
        )
    return ordinals, matrix


# --- external embedder contract -------------------------------------------


class ExternalEmbedderError(EmbeddingError):
    pass


def run_external_embedder(
    manifest_path: str | Path, output_path: str | Path, config: EmbedderConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Invoke the external embedder child process and validate its output.

    Contract: argv = command + [manifest_path, output_path, dim]; exit 0 on
    success; the output file holds one vector per manifest line with ordinals
    0..N-1 in manifest order.
    """
    manifest_path = Path(manifest_path)
    argv = [*config.command, str(manifest_path), str(output_path), str(config.dim)]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip()[-2000:]
        raise ExternalEmbedderError(
            f"external embedder exited {proc.returncode}: {' '.join(argv)}\n{tail}"
        )
    expected = sum(1 for line in manifest_path.read_text(encoding="utf-8").splitlines() if line)
    try:
        ordinals, matrix = read_vectors(output_path)
    except VectorsFileError as exc:
        raise _name_offender(exc, manifest_path) from exc
    if matrix.shape[0] != expected:
        raise ExternalEmbedderError(
            f"external embedder wrote {matrix.shape[0]} vectors for {expected} manifest lines"
        )
    if matrix.shape[1] != config.dim:
        raise ExternalEmbedderError(
            f"external embedder wrote dim {matrix.shape[1]}, expected {config.dim}"
        )
    if sorted(ordinals.tolist()) != list(range(expected)):
        raise ExternalEmbedderError("external embedder ordinals are not exactly 0..N-1")
    return ordinals, matrix


def _name_offender(exc: VectorsFileError, manifest_path: Path) -> ExternalEmbedderError:
    """Attach the manifest image id to a row-level validation failure."""
    message = str(exc)
    marker = "(ordinal "
    if marker in message:
        try:
            ordinal = int(message.split(marker, 1)[1].split(")", 1)[0])
            from imgtriage.ingest import read_manifest

            records = read_manifest(manifest_path)
            if 0 <= ordinal < len(records):
                message += f" [image_id {records[ordinal].image_id}]"
        except Exception:
            pass
    return ExternalEmbedderError(message)
