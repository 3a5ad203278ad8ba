"""Content-addressed thumbnail cache.

Thumbnails are rendered at ingest (max edge 256 px, JPEG) and stored under
``thumbs/<hh>/<content_hash>.jpg`` so byte-identical images across paths and
projects share one cache entry.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable

from PIL import Image

from imgtriage.ingest import ImageRecord

log = logging.getLogger(__name__)

THUMB_MAX_EDGE = 256
THUMB_QUALITY = 85


def thumb_path(thumbs_dir: str | Path, content_hash: str) -> Path:
    return Path(thumbs_dir) / content_hash[:2] / f"{content_hash}.jpg"


def render_thumbnail(source: str | Path, dest: Path) -> None:
    dest.parent.mkdir(parents=True, exist_ok=True)
    with Image.open(source) as im:
        im = im.convert("RGB")
        im.thumbnail((THUMB_MAX_EDGE, THUMB_MAX_EDGE))
        im.save(dest, "JPEG", quality=THUMB_QUALITY)


def ensure_thumbnails(
    records: Iterable[ImageRecord], corpus_root: str | Path, thumbs_dir: str | Path
) -> int:
    """Render missing thumbnails for valid records; returns how many were made."""
    root = Path(corpus_root)
    made = 0
    for rec in records:
        if not rec.valid or not rec.content_hash:
            continue
        dest = thumb_path(thumbs_dir, rec.content_hash)
        if dest.exists():
            continue
        try:
            render_thumbnail(root / rec.path, dest)
            made += 1
        except Exception as exc:
            log.warning("thumbnail failed for %s: %s", rec.path, exc)
    return made
