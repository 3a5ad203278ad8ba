"""Categorization report: per-cluster sizes and labels plus six corpus totals.

The six totals (responsive / not responsive / further review / untagged /
excluded by prefilter / invalid) partition the scanned corpus, so they must
sum to the scanned file count exactly.  That conservation law is checked
before a report is handed out.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from imgtriage.ingest import read_manifest
from imgtriage.service.store import (
    ROUND_COMPLETE,
    TAG_LABELS,
    UNTAGGED,
    ProjectStore,
    StoreError,
    TagEvent,
)

TOTAL_KEYS = (
    "images_responsive",
    "images_not_responsive",
    "images_further_review",
    "images_untagged",
    "images_excluded_prefilter",
    "images_invalid",
)


@dataclass(frozen=True)
class ReportRow:
    cluster_index: int
    size_images: int
    label: str
    note: str
    medoid_image_id: str
    medoid_thumbnail: str  # content hash, "" when unavailable


@dataclass(frozen=True)
class CategorizationReport:
    project_id: str
    round: int
    rows: tuple[ReportRow, ...]
    totals: dict[str, int]
    images_scanned: int

    def to_json(self) -> dict:
        return {
            "project_id": self.project_id,
            "round": self.round,
            "rows": [
                {
                    "cluster_index": r.cluster_index,
                    "size_images": r.size_images,
                    "label": r.label,
                    "note": r.note,
                    "medoid_image_id": r.medoid_image_id,
                    "medoid_thumbnail": r.medoid_thumbnail,
                }
                for r in self.rows
            ],
            "totals": dict(self.totals),
            "images_scanned": self.images_scanned,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cluster_index", "size_images", "label", "note"])
        for r in self.rows:
            w.writerow([r.cluster_index, r.size_images, r.label, r.note])
        buf.write("#TOTALS\n")
        for key in TOTAL_KEYS:
            buf.write(f"#{key},{self.totals[key]}\n")
        buf.write(f"#images_scanned,{self.images_scanned}\n")
        return buf.getvalue()


def generate_report(
    store: ProjectStore, project_id: str, round_number: int
) -> CategorizationReport:
    """Recompute the report from primitives: manifest + summaries + tag log.

    Nothing is cached, so recomputation is idempotent by construction.
    """
    meta = store.round_meta(project_id, round_number)
    if meta.get("status") != ROUND_COMPLETE:
        raise StoreError(
            "round_not_ready",
            f"round {round_number} is {meta.get('status')}, not complete",
        )
    rdir = store.round_dir(project_id, round_number)
    records = read_manifest(rdir / "manifest.jsonl")
    summaries = json.loads((rdir / "summaries.json").read_text(encoding="utf-8"))
    labels = store.labels_for_round(project_id, round_number)
    return build_report(
        records, summaries, labels, project_id=project_id, round_number=round_number
    )


def build_report(
    records,
    summaries: list[dict],
    labels,
    project_id: str = "",
    round_number: int = 0,
) -> CategorizationReport:
    """Assemble a report from in-memory primitives and enforce conservation.

    ``labels`` maps cluster index to the current tag event (or is empty).
    """
    hash_by_id = {r.image_id: r.content_hash for r in records}

    totals = dict.fromkeys(TOTAL_KEYS, 0)
    rows = []
    for s in summaries:
        event = labels.get(s["cluster_index"])
        label = event.label if event else UNTAGGED
        note = event.note if event else ""
        totals[_total_key(label)] += s["size_total_images"]
        rows.append(
            ReportRow(
                cluster_index=s["cluster_index"],
                size_images=s["size_total_images"],
                label=label,
                note=note,
                medoid_image_id=s["medoid_image_id"],
                medoid_thumbnail=hash_by_id.get(s["medoid_image_id"], ""),
            )
        )
    totals["images_excluded_prefilter"] = sum(
        1 for r in records if r.excluded == "high_frequency"
    )
    totals["images_invalid"] = sum(1 for r in records if not r.valid)

    scanned = len(records)
    if sum(totals.values()) != scanned:
        raise StoreError(
            "report_conservation",
            f"report totals sum to {sum(totals.values())} but {scanned} files were scanned",
        )
    return CategorizationReport(
        project_id=project_id,
        round=round_number,
        rows=tuple(rows),
        totals=totals,
        images_scanned=scanned,
    )


def collapse_latest(events) -> dict[int, TagEvent]:
    """Latest tag event per cluster regardless of round (file-based reports)."""
    latest: dict[int, TagEvent] = {}
    for ev in sorted(events, key=lambda e: e.seq):
        latest[ev.cluster_index] = ev
    return latest


def _total_key(label: str) -> str:
    if label == UNTAGGED:
        return "images_untagged"
    if label not in TAG_LABELS:
        raise StoreError("unknown_label", f"unexpected label in tag log: {label!r}")
    return "images_" + label


def review_stats(store: ProjectStore, project_id: str) -> dict:
    """Per-round review progress: tagged/untagged clusters, resolved images."""
    events = store.read_tag_events(project_id)
    rounds = []
    for meta in store.list_rounds(project_id):
        n = meta["round"]
        entry = {
            "round": n,
            "status": meta.get("status"),
            "k": meta.get("k"),
            "clusters_tagged": 0,
            "clusters_untagged": 0,
            "images_resolved": 0,
            "images_pending": 0,
        }
        if meta.get("status") == ROUND_COMPLETE:
            report = generate_report(store, project_id, n)
            tagged = sum(1 for r in report.rows if r.label != UNTAGGED)
            resolved = (
                report.totals["images_responsive"]
                + report.totals["images_not_responsive"]
            )
            pending = report.images_scanned - resolved - report.totals["images_invalid"]
            entry.update(
                clusters_tagged=tagged,
                clusters_untagged=len(report.rows) - tagged,
                images_resolved=resolved,
                images_pending=pending,
                totals=report.totals,
            )
        rounds.append(entry)
    times = [e.timestamp for e in events]
    return {
        "project_id": project_id,
        "rounds": rounds,
        "tag_events": len(events),
        "first_tag_at": min(times) if times else None,
        "last_tag_at": max(times) if times else None,
    }
