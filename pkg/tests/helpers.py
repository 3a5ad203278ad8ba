"""Synthetic image corpora and brute-force oracles shared across test modules."""

from pathlib import Path

import numpy as np
from PIL import Image


def best_partition_cost(points, k: int, chunk: int = 1 << 17) -> float:
    """Global k-means optimum by enumerating every surjective assignment.

    Uses the identity cost = sum ||x||^2 - sum_c ||sum_c x||^2 / n_c, which is
    exact for the partition-optimal centroids, so no centroid search is needed.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    total = k**n
    sq = float((x * x).sum())
    best = np.inf
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        assigns = (ids[:, None] // powers) % k
        cost = np.full(ids.shape[0], sq)
        ok = np.ones(ids.shape[0], dtype=bool)
        for c in range(k):
            mask = assigns == c
            counts = mask.sum(axis=1)
            ok &= counts > 0
            sums = mask.astype(np.float64) @ x
            cost -= np.divide(
                (sums * sums).sum(axis=1),
                counts,
                out=np.zeros(ids.shape[0]),
                where=counts > 0,
            )
        cost[~ok] = np.inf
        best = min(best, float(cost.min()))
    return best


def themed_pixels(rng, theme: int, size=(24, 24), themes: int = 8) -> np.ndarray:
    """Noise raster whose mean color identifies its theme."""
    level = (theme * 255) // max(themes, 1)
    base = np.full((size[1], size[0], 3), level, dtype=np.uint8)
    noise = rng.integers(0, 25, size=base.shape, dtype=np.uint8)
    return base + noise


def save_png(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path)


def build_corpus(
    root: Path,
    n_unique: int,
    n_duplicates: int = 0,
    n_invalid: int = 0,
    themes: int = 8,
    seed: int = 0,
    size=(24, 24),
) -> int:
    """Write a corpus of themed noise PNGs; returns the total file count.

    Duplicates are byte-copies of the first unique files; invalid files
    alternate between truncated PNG headers and non-image bytes.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n_unique):
        pixels = themed_pixels(rng, i % themes, size, themes)
        save_png(root / f"d{i % 5}" / f"img_{i:05d}.png", pixels)
    for j in range(n_duplicates):
        i = j % n_unique
        src = root / f"d{i % 5}" / f"img_{i:05d}.png"
        (root / f"dup_{j:05d}.png").write_bytes(src.read_bytes())
    for m in range(n_invalid):
        bad = root / f"bad_{m:05d}.png"
        if m % 2 == 0:
            bad.write_bytes(b"\x89PNG\r\n\x1a\n" + bytes(24))
        else:
            bad.write_bytes(b"definitely not an image " * 3)
    return n_unique + n_duplicates + n_invalid
