"""Corpus scanning, byte-exact deduplication, and frequency triage.

Scanning produces one :class:`ImageRecord` per candidate file, ordered by
relative path so repeated scans of the same tree are byte-identical.
Deduplication partitions valid records by content hash; the frequency tally
surfaces boilerplate (logos, icons) that can be excluded before clustering.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from PIL import Image

log = logging.getLogger(__name__)

DEFAULT_EXTENSIONS = ("png", "jpg", "jpeg", "gif", "bmp", "tiff")
DEFAULT_HASH = "sha256"

EXCLUDED_NONE = "none"
EXCLUDED_HIGH_FREQUENCY = "high_frequency"
EXCLUDED_INVALID = "invalid"

MANIFEST_FIELDS = (
    "image_id",
    "path",
    "byte_size",
    "content_hash",
    "format",
    "width",
    "height",
    "dedup_group_id",
    "excluded",
)


class IngestError(Exception):
    """Unrecoverable ingest failure (unreadable root, malformed manifest)."""


@dataclass(frozen=True)
class ImageRecord:
    """One physical image file in the corpus."""

    image_id: str
    path: str  # relative to the corpus root, POSIX separators
    byte_size: int
    content_hash: str
    format: str  # decoded format tag, or "invalid"
    width: int
    height: int
    dedup_group_id: str
    excluded: str  # none | high_frequency | invalid

    @property
    def valid(self) -> bool:
        return self.format != "invalid"


@dataclass(frozen=True)
class DedupGroup:
    """Byte-identical files collapsed to one representative."""

    group_id: str
    representative_image_id: str
    member_ids: tuple[str, ...]
    frequency: int


@dataclass(frozen=True)
class TallyRow:
    content_hash: str
    byte_size: int
    frequency: int
    sample_path: str


def image_id_for_path(relpath: str) -> str:
    return "img-" + hashlib.sha256(relpath.encode("utf-8")).hexdigest()[:16]


def group_id_for_hash(content_hash: str) -> str:
    return "g-" + content_hash[:16] if content_hash else ""


def _scan_one(root: Path, relpath: str, hash_name: str) -> ImageRecord:
    full = root / relpath
    image_id = image_id_for_path(relpath)
    try:
        data = full.read_bytes()
    except OSError as exc:
        log.warning("unreadable file %s: %s", relpath, exc)
        try:
            size = full.stat().st_size
        except OSError:
            size = 0
        return ImageRecord(image_id, relpath, size, "", "invalid", 0, 0, "", EXCLUDED_INVALID)
    content_hash = hashlib.new(hash_name, data).hexdigest()
    group_id = group_id_for_hash(content_hash)
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()  # force full decode so truncated files fail here
            fmt = (im.format or "unknown").lower()
            width, height = im.size
    except Exception as exc:
        log.debug("undecodable file %s: %s", relpath, exc)
        return ImageRecord(
            image_id, relpath, len(data), content_hash, "invalid", 0, 0, group_id, EXCLUDED_INVALID
        )
    return ImageRecord(
        image_id, relpath, len(data), content_hash, fmt, width, height, group_id, EXCLUDED_NONE
    )


def scan_corpus(
    root: str | Path,
    recurse: bool = True,
    extensions: Sequence[str] = DEFAULT_EXTENSIONS,
    hash_name: str = DEFAULT_HASH,
    workers: int = 4,
) -> list[ImageRecord]:
    """Scan ``root`` for image files and return records ordered by path.

    Files whose extension is outside the allow-list are ignored.  Undecodable
    or unreadable files are kept as ``excluded=invalid`` records so corpus
    counts reconcile.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"corpus root is not a readable directory: {root}")
    hashlib.new(hash_name)  # validate the algorithm name up front
    allowed = {e.lower().lstrip(".") for e in extensions}

    def _fatal_if_root(exc: OSError):
        # unreadable corpus root is fatal; deeper errors just skip that subtree
        if Path(exc.filename or "") == root:
            raise IngestError(f"corpus root is not readable: {root}: {exc}") from exc
        log.warning("skipping unreadable directory: %s", exc)

    relpaths: list[str] = []
    if recurse:
        walker = os.walk(root, onerror=_fatal_if_root)
    else:
        try:
            walker = [(str(root), [], [p.name for p in root.iterdir() if p.is_file()])]
        except OSError as exc:
            raise IngestError(f"corpus root is not readable: {root}: {exc}") from exc
    for dirpath, _dirnames, filenames in walker:
        reldir = Path(dirpath).relative_to(root)
        for name in filenames:
            ext = name.rsplit(".", 1)[-1].lower() if "." in name else ""
            if ext in allowed:
                relpaths.append((reldir / name).as_posix())
    relpaths.sort()

    if workers > 1 and len(relpaths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda rp: _scan_one(root, rp, hash_name), relpaths))
    else:
        records = [_scan_one(root, rp, hash_name) for rp in relpaths]
    return records


def deduplicate(records: Iterable[ImageRecord]) -> list[DedupGroup]:
    """Partition valid records into byte-identical groups.

    The representative is the member with the lexicographically smallest path;
    groups sort by frequency descending, group id ascending.
    """
    by_hash: dict[str, list[ImageRecord]] = {}
    for rec in records:
        if rec.valid:
            by_hash.setdefault(rec.content_hash, []).append(rec)
    groups = []
    for content_hash, members in by_hash.items():
        members.sort(key=lambda r: r.path)
        groups.append(
            DedupGroup(
                group_id=group_id_for_hash(content_hash),
                representative_image_id=members[0].image_id,
                member_ids=tuple(r.image_id for r in members),
                frequency=len(members),
            )
        )
    groups.sort(key=lambda g: (-g.frequency, g.group_id))
    return groups


def tally_frequencies(
    groups: Sequence[DedupGroup], records: Sequence[ImageRecord]
) -> list[TallyRow]:
    """One row per dedup group, sorted frequency-descending then hash-ascending."""
    by_id = {r.image_id: r for r in records}
    rows = []
    for g in groups:
        rep = by_id[g.representative_image_id]
        rows.append(TallyRow(rep.content_hash, rep.byte_size, g.frequency, rep.path))
    rows.sort(key=lambda row: (-row.frequency, row.content_hash))
    return rows


def exclude_high_frequency(
    records: Sequence[ImageRecord],
    groups: Sequence[DedupGroup],
    min_frequency: int | None = None,
    content_hashes: Iterable[str] | None = None,
) -> list[ImageRecord]:
    """Mark every member of the matching groups as ``excluded=high_frequency``.

    Exactly one of ``min_frequency`` / ``content_hashes`` must be given.
    Exclusion is recorded on the returned records, never deletes anything, and
    is idempotent.
    """
    if (min_frequency is None) == (content_hashes is None):
        raise ValueError("supply exactly one of min_frequency or content_hashes")
    if min_frequency is not None and min_frequency < 2:
        raise ValueError("min_frequency must be >= 2 (lower would exclude unique content)")

    if min_frequency is not None:
        matching = {g.group_id for g in groups if g.frequency >= min_frequency}
    else:
        wanted = {group_id_for_hash(h) for h in content_hashes}
        matching = {g.group_id for g in groups if g.group_id in wanted}

    out = []
    for rec in records:
        if rec.valid and rec.dedup_group_id in matching:
            out.append(replace(rec, excluded=EXCLUDED_HIGH_FREQUENCY))
        else:
            out.append(rec)
    return out


# --- file formats ---------------------------------------------------------


def write_manifest(records: Iterable[ImageRecord], path: str | Path) -> None:
    """One JSON object per line, keys sorted, paths relative to the corpus root."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True, separators=(",", ":")) + "\n")


def read_manifest(path: str | Path) -> list[ImageRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(ImageRecord(**{k: obj[k] for k in MANIFEST_FIELDS}))
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestError(f"{path}:{lineno}: malformed manifest line: {exc}") from exc
    return records


def write_tally(rows: Iterable[TallyRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["content_hash", "byte_size", "frequency", "sample_path"])
        for row in rows:
            writer.writerow([row.content_hash, row.byte_size, row.frequency, row.sample_path])


def read_tally(path: str | Path) -> list[TallyRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            TallyRow(r["content_hash"], int(r["byte_size"]), int(r["frequency"]), r["sample_path"])
            for r in reader
        ]


def write_groups(groups: Iterable[DedupGroup], path: str | Path) -> None:
    payload = [asdict(g) | {"member_ids": list(g.member_ids)} for g in groups]
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def read_groups(path: str | Path) -> list[DedupGroup]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        DedupGroup(
            group_id=g["group_id"],
            representative_image_id=g["representative_image_id"],
            member_ids=tuple(g["member_ids"]),
            frequency=g["frequency"],
        )
        for g in payload
    ]
