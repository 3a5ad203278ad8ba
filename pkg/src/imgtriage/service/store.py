"""Embedded single-writer project store.

File layout under the data directory:

    projects/<project_id>/project.json        project metadata
    projects/<project_id>/tags.log            append-only tag events (JSONL)
    projects/<project_id>/rounds/<n>/...      frozen round artifacts
    thumbs/<hh>/<content_hash>.jpg            content-addressed thumbnails

Tag events are the source of truth for labels: the current label of a
(round, cluster) is the event with the highest sequence number, and replaying
the log from empty reproduces the state exactly.  Writes serialize through a
per-project lock that assigns sequence numbers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

TAG_LABELS = ("responsive", "not_responsive", "further_review")
UNTAGGED = "untagged"

ROUND_RUNNING = "running"
ROUND_COMPLETE = "complete"
ROUND_FAILED = "failed"


class StoreError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Project:
    project_id: str
    name: str
    corpus_root: str
    created_at: str


@dataclass(frozen=True)
class TagEvent:
    seq: int
    round: int
    cluster_index: int
    label: str
    note: str
    author: str
    timestamp: str


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def project_id_for_name(name: str) -> str:
    return "p-" + hashlib.sha256(name.encode("utf-8")).hexdigest()[:12]


def current_labels(events: Iterable[TagEvent], round_number: int | None = None) -> dict[tuple[int, int], TagEvent]:
    """Fold events into the latest label per (round, cluster).

    Later sequence numbers win; events arrive in log order but the fold sorts
    defensively so replay from any serialization is order-independent.
    """
    latest: dict[tuple[int, int], TagEvent] = {}
    for ev in sorted(events, key=lambda e: e.seq):
        if round_number is not None and ev.round != round_number:
            continue
        latest[(ev.round, ev.cluster_index)] = ev
    return latest


def labels_snapshot(events: Iterable[TagEvent]) -> bytes:
    """Canonical byte serialization of the current labels, for replay checks."""
    latest = current_labels(events)
    payload = {
        f"{r}:{c}": asdict(ev) for (r, c), ev in latest.items()
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_json_atomic(path: Path, payload: object) -> None:
    """Write via a temp file + rename: status pollers read these files while
    the round thread rewrites them, and must never see a torn document."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")
    os.replace(tmp, path)


class ProjectStore:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        (self.data_dir / "projects").mkdir(parents=True, exist_ok=True)
        (self.data_dir / "thumbs").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._seqs: dict[str, int] = {}

    # --- paths ------------------------------------------------------------

    def project_dir(self, project_id: str) -> Path:
        return self.data_dir / "projects" / project_id

    def tags_path(self, project_id: str) -> Path:
        return self.project_dir(project_id) / "tags.log"

    def rounds_dir(self, project_id: str) -> Path:
        return self.project_dir(project_id) / "rounds"

    def round_dir(self, project_id: str, round_number: int) -> Path:
        return self.rounds_dir(project_id) / f"{round_number:03d}"

    def thumbs_dir(self) -> Path:
        return self.data_dir / "thumbs"

    def _lock(self, project_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(project_id, threading.Lock())

    # --- projects ---------------------------------------------------------

    def create_project(self, name: str, corpus_root: str | Path) -> Project:
        if not name or not name.strip():
            raise StoreError("invalid_name", "project name must be non-empty")
        root = Path(corpus_root)
        if not root.is_dir():
            raise StoreError("corpus_unreadable", f"corpus root is not a directory: {root}")
        project_id = project_id_for_name(name)
        pdir = self.project_dir(project_id)
        if pdir.exists():
            raise StoreError("duplicate_name", f"project named {name!r} already exists")
        pdir.mkdir(parents=True)
        self.rounds_dir(project_id).mkdir()
        project = Project(project_id, name, str(root.resolve()), _utcnow())
        _write_json_atomic(pdir / "project.json", asdict(project))
        self.tags_path(project_id).touch()
        return project

    def get_project(self, project_id: str) -> Project:
        path = self.project_dir(project_id) / "project.json"
        if not path.exists():
            raise StoreError("unknown_project", f"no project {project_id}")
        return Project(**json.loads(path.read_text(encoding="utf-8")))

    def list_projects(self) -> list[Project]:
        out = []
        for pdir in sorted((self.data_dir / "projects").iterdir()):
            meta = pdir / "project.json"
            if meta.exists():
                out.append(Project(**json.loads(meta.read_text(encoding="utf-8"))))
        return out

    # --- rounds -----------------------------------------------------------

    def list_rounds(self, project_id: str) -> list[dict]:
        self.get_project(project_id)
        rounds = []
        rdir = self.rounds_dir(project_id)
        if rdir.exists():
            for sub in sorted(rdir.iterdir()):
                meta = sub / "round.json"
                if meta.exists():
                    rounds.append(json.loads(meta.read_text(encoding="utf-8")))
        return rounds

    def round_meta(self, project_id: str, round_number: int) -> dict:
        path = self.round_dir(project_id, round_number) / "round.json"
        if not path.exists():
            raise StoreError(
                "unknown_round", f"project {project_id} has no round {round_number}"
            )
        return json.loads(path.read_text(encoding="utf-8"))

    def write_round_meta(self, project_id: str, round_number: int, meta: dict) -> None:
        rdir = self.round_dir(project_id, round_number)
        rdir.mkdir(parents=True, exist_ok=True)
        _write_json_atomic(rdir / "round.json", meta)

    def allocate_round(self, project_id: str) -> int:
        """Reserve the next round number (rounds are 1-based and increasing).

        Writes a placeholder running-status meta inside the lock so concurrent
        allocations cannot hand out the same number.
        """
        with self._lock(project_id):
            existing = [m["round"] for m in self.list_rounds(project_id)]
            n = max(existing, default=0) + 1
            self.write_round_meta(
                project_id,
                n,
                {"round": n, "status": ROUND_RUNNING, "created_at": _utcnow()},
            )
            return n

    # --- tag events -------------------------------------------------------

    def _last_seq(self, project_id: str) -> int:
        events = self.read_tag_events(project_id)
        return events[-1].seq if events else 0

    def append_tag_event(
        self,
        project_id: str,
        round_number: int,
        cluster_index: int,
        label: str,
        note: str,
        author: str,
    ) -> TagEvent:
        if label not in TAG_LABELS:
            raise StoreError(
                "unknown_label",
                f"label must be one of {', '.join(TAG_LABELS)}; got {label!r}",
            )
        meta = self.round_meta(project_id, round_number)
        if meta.get("status") != ROUND_COMPLETE:
            raise StoreError(
                "round_not_ready", f"round {round_number} is {meta.get('status')}"
            )
        k = int(meta["k"])
        if not 0 <= cluster_index < k:
            raise StoreError(
                "unknown_cluster", f"cluster {cluster_index} outside [0, {k})"
            )
        with self._lock(project_id):
            if project_id not in self._seqs:
                self._seqs[project_id] = self._last_seq(project_id)
            self._seqs[project_id] += 1
            event = TagEvent(
                seq=self._seqs[project_id],
                round=round_number,
                cluster_index=cluster_index,
                label=label,
                note=note,
                author=author,
                timestamp=_utcnow(),
            )
            with open(self.tags_path(project_id), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(event), sort_keys=True, separators=(",", ":")) + "\n")
                fh.flush()
        return event

    def read_tag_events(self, project_id: str) -> list[TagEvent]:
        path = self.tags_path(project_id)
        if not path.exists():
            return []
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(TagEvent(**json.loads(line)))
        return events

    def labels_for_round(self, project_id: str, round_number: int) -> dict[int, TagEvent]:
        latest = current_labels(self.read_tag_events(project_id), round_number)
        return {cluster: ev for (_r, cluster), ev in latest.items()}

    def tag_history(
        self, project_id: str, round_number: int, cluster_index: int
    ) -> list[TagEvent]:
        return [
            ev
            for ev in self.read_tag_events(project_id)
            if ev.round == round_number and ev.cluster_index == cluster_index
        ]
