"""HTTP review service: cluster browsing, tagging, reports, similarity.

Reads are served straight from round artifacts loaded into per-round
contexts (rounds are frozen once complete, so contexts never invalidate).
Tag writes serialize through the store's per-project lock.  Round execution
runs on a background thread and is poll-able via the round status.
"""

from __future__ import annotations

import json
import logging
import math
import threading

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse

from imgtriage import ann, kmeans
from imgtriage.embedding import EmbedderConfig, read_vectors
from imgtriage.ingest import read_groups, read_manifest
from imgtriage.service.pipeline import RoundConfig, run_round
from imgtriage.service.report import generate_report, review_stats
from imgtriage.service.store import (
    ROUND_COMPLETE,
    UNTAGGED,
    ProjectStore,
    StoreError,
)
from imgtriage.service.thumbs import thumb_path

log = logging.getLogger(__name__)

_HTTP_STATUS = {
    "unknown_project": 404,
    "unknown_round": 404,
    "unknown_cluster": 404,
    "unknown_image": 404,
    "not_in_round": 404,
    "unknown_thumbnail": 404,
    "duplicate_name": 409,
    "round_not_ready": 409,
    "report_conservation": 500,
    "round_corrupt": 500,
}

MAX_PAGE = 500


class RoundContext:
    """Artifacts of one completed round, shared across request handlers."""

    def __init__(self, store: ProjectStore, project_id: str, round_number: int):
        rdir = store.round_dir(project_id, round_number)
        self.project_id = project_id
        self.round = round_number
        self.records = read_manifest(rdir / "manifest.jsonl")
        self.by_id = {r.image_id: r for r in self.records}
        self.groups = read_groups(rdir / "groups.json")
        self.group_by_rep = {g.representative_image_id: g for g in self.groups}
        self.group_of_member = {
            mid: g for g in self.groups for mid in g.member_ids
        }
        ordinals, self.matrix = read_vectors(rdir / "vectors.fvec")
        model = kmeans.read_model(rdir / "model.kmeans")
        if not np.array_equal(model.ordinals, ordinals):
            raise StoreError(
                "round_corrupt",
                f"model and vectors disagree on ordinals in round {round_number}",
            )
        self.model = kmeans.recompute_distances(model, ordinals, self.matrix)
        self.rep_ids = [self.records[int(o)].image_id for o in ordinals]
        self.row_of_rep = {rid: i for i, rid in enumerate(self.rep_ids)}
        self.summaries = json.loads(
            (rdir / "summaries.json").read_text(encoding="utf-8")
        )
        # member rows per cluster, ascending distance-to-centroid
        order = np.lexsort((np.arange(len(self.model.labels)), self.model.sqdists))
        self.cluster_rows: list[list[int]] = [[] for _ in range(self.model.k)]
        for row in order:
            self.cluster_rows[int(self.model.labels[row])].append(int(row))
        self._index: ann.AnnIndex | None = None
        self._index_lock = threading.Lock()

    def index(self) -> ann.AnnIndex:
        with self._index_lock:
            if self._index is None:
                self._index = ann.build_index(self.matrix, seed=self.model.seed)
            return self._index

    def expand_row(self, row: int) -> list[str]:
        """Image ids carried by a representative row (its whole dedup group)."""
        rep_id = self.rep_ids[row]
        group = self.group_by_rep.get(rep_id)
        return list(group.member_ids) if group else [rep_id]


def _error(code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=_HTTP_STATUS.get(code, 400),
        content={"code": code, "message": message},
    )


def _bad(message: str) -> StoreError:
    return StoreError("invalid_request", message)


def _int_param(raw, name: str, default: int, lo: int, hi: int) -> int:
    if raw is None:
        return default
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise _bad(f"{name} must be an integer, got {raw!r}")
    if not lo <= value <= hi:
        raise _bad(f"{name} must be in [{lo}, {hi}], got {value}")
    return value


def create_app(data_dir) -> FastAPI:
    store = ProjectStore(data_dir)
    app = FastAPI(title="imgtriage review service", docs_url=None, redoc_url=None)
    app.state.store = store
    contexts: dict[tuple[str, int], RoundContext] = {}
    contexts_lock = threading.Lock()

    def get_ctx(project_id: str, round_number: int) -> RoundContext:
        key = (project_id, round_number)
        with contexts_lock:
            ctx = contexts.get(key)
        if ctx is not None:
            return ctx
        meta = store.round_meta(project_id, round_number)
        if meta.get("status") != ROUND_COMPLETE:
            raise StoreError(
                "round_not_ready",
                f"round {round_number} is {meta.get('status')}, not complete",
            )
        ctx = RoundContext(store, project_id, round_number)
        with contexts_lock:
            return contexts.setdefault(key, ctx)

    @app.exception_handler(StoreError)
    async def _store_error(_request, exc: StoreError):
        return _error(exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def _request_invalid(_request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in first.get("loc", ()))
        return _error(
            "invalid_request", f"{where}: {first.get('msg', 'invalid request')}"
        )

    # --- projects ---------------------------------------------------------

    @app.post("/api/projects", status_code=201)
    async def create_project(request: Request):
        body = await _json_body(request)
        project = store.create_project(
            str(body.get("name", "")), str(body.get("corpus_root", ""))
        )
        return _project_json(project)

    @app.get("/api/projects")
    def list_projects():
        return [_project_json(p) for p in store.list_projects()]

    @app.get("/api/projects/{project_id}")
    def get_project(project_id: str):
        payload = _project_json(store.get_project(project_id))
        payload["rounds"] = store.list_rounds(project_id)
        return payload

    @app.get("/api/projects/{project_id}/stats")
    def stats(project_id: str):
        store.get_project(project_id)
        return review_stats(store, project_id)

    # --- rounds -----------------------------------------------------------

    @app.post("/api/projects/{project_id}/rounds", status_code=202)
    async def start_round(project_id: str, request: Request):
        store.get_project(project_id)
        body = await _json_body(request)
        config = _round_config(body)
        round_number = store.allocate_round(project_id)

        def worker():
            try:
                run_round(store, project_id, config, round_number=round_number)
            except Exception:
                log.exception(
                    "round %d of %s failed in background", round_number, project_id
                )

        threading.Thread(
            target=worker, name=f"round-{project_id}-{round_number}", daemon=True
        ).start()
        return {"round": round_number, "status": "running"}

    @app.get("/api/projects/{project_id}/rounds")
    def list_rounds(project_id: str):
        return store.list_rounds(project_id)

    @app.get("/api/projects/{project_id}/rounds/{round_number}")
    def round_status(project_id: str, round_number: int):
        store.get_project(project_id)
        return store.round_meta(project_id, round_number)

    # --- clusters ---------------------------------------------------------

    @app.get("/api/projects/{project_id}/rounds/{round_number}/clusters")
    def clusters(
        project_id: str,
        round_number: int,
        sort: str = "index",
        order: str | None = None,
    ):
        ctx = get_ctx(project_id, round_number)
        labels = store.labels_for_round(project_id, round_number)
        rows = []
        for s in ctx.summaries:
            event = labels.get(s["cluster_index"])
            medoid = ctx.by_id.get(s["medoid_image_id"])
            rows.append(
                {
                    **s,
                    "sample_image_ids": list(s["sample_image_ids"]),
                    "sample_thumbnails": [
                        ctx.by_id[i].content_hash
                        for i in s["sample_image_ids"]
                        if i in ctx.by_id
                    ],
                    "label": event.label if event else UNTAGGED,
                    "note": event.note if event else "",
                    "medoid_thumbnail": medoid.content_hash if medoid else "",
                }
            )
        if sort not in ("index", "size"):
            raise _bad(f"sort must be 'index' or 'size', got {sort!r}")
        if order not in (None, "asc", "desc"):
            raise _bad(f"order must be 'asc' or 'desc', got {order!r}")
        reverse = (order or ("desc" if sort == "size" else "asc")) == "desc"
        key = "size_total_images" if sort == "size" else "cluster_index"
        rows.sort(key=lambda r: (r[key], r["cluster_index"]), reverse=reverse)
        return {"round": round_number, "k": ctx.model.k, "clusters": rows}

    @app.get(
        "/api/projects/{project_id}/rounds/{round_number}/clusters/{cluster_index}/images"
    )
    def cluster_images(
        project_id: str,
        round_number: int,
        cluster_index: int,
        offset: int = 0,
        limit: int = 50,
    ):
        ctx = get_ctx(project_id, round_number)
        if not 0 <= cluster_index < ctx.model.k:
            raise StoreError(
                "unknown_cluster",
                f"cluster {cluster_index} outside [0, {ctx.model.k})",
            )
        offset = _int_param(offset, "offset", 0, 0, 10**9)
        limit = _int_param(limit, "limit", 50, 1, MAX_PAGE)
        items = []
        for row in ctx.cluster_rows[cluster_index]:
            distance = math.sqrt(float(ctx.model.sqdists[row]))
            rep_id = ctx.rep_ids[row]
            for image_id in ctx.expand_row(row):
                rec = ctx.by_id[image_id]
                items.append(
                    {
                        "image_id": image_id,
                        "path": rec.path,
                        "thumbnail": rec.content_hash,
                        "distance": distance,
                        "representative": image_id == rep_id,
                        "width": rec.width,
                        "height": rec.height,
                    }
                )
        event = store.labels_for_round(project_id, round_number).get(cluster_index)
        return {
            "cluster_index": cluster_index,
            "label": event.label if event else UNTAGGED,
            "note": event.note if event else "",
            "total_images": len(items),
            "offset": offset,
            "limit": limit,
            "images": items[offset : offset + limit],
        }

    @app.put(
        "/api/projects/{project_id}/rounds/{round_number}/clusters/{cluster_index}/tag"
    )
    async def tag_cluster(
        project_id: str, round_number: int, cluster_index: int, request: Request
    ):
        body = await _json_body(request)
        if "label" not in body:
            raise _bad("body must include 'label'")
        event = store.append_tag_event(
            project_id,
            round_number,
            cluster_index,
            str(body["label"]),
            str(body.get("note", "")),
            str(body.get("author", "")),
        )
        return _event_json(event)

    @app.get(
        "/api/projects/{project_id}/rounds/{round_number}/clusters/{cluster_index}/tags"
    )
    def tag_history(project_id: str, round_number: int, cluster_index: int):
        store.round_meta(project_id, round_number)
        events = store.tag_history(project_id, round_number, cluster_index)
        return {"cluster_index": cluster_index, "events": [_event_json(e) for e in events]}

    # --- report -----------------------------------------------------------

    @app.get("/api/projects/{project_id}/rounds/{round_number}/report")
    def report(project_id: str, round_number: int, format: str = "structured"):
        rep = generate_report(store, project_id, round_number)
        if format == "csv":
            return PlainTextResponse(rep.to_csv(), media_type="text/csv")
        if format != "structured":
            raise _bad(f"format must be 'csv' or 'structured', got {format!r}")
        return rep.to_json()

    # --- similarity -------------------------------------------------------

    @app.get("/api/projects/{project_id}/rounds/{round_number}/similar/{image_id}")
    def similar(
        project_id: str,
        round_number: int,
        image_id: str,
        k: int = ann.DEFAULT_K,
        checks: int | None = None,
    ):
        ctx = get_ctx(project_id, round_number)
        k = _int_param(k, "k", ann.DEFAULT_K, 1, MAX_PAGE)
        if image_id not in ctx.by_id:
            raise StoreError("unknown_image", f"no image {image_id} in round manifest")
        group = ctx.group_of_member.get(image_id)
        row = ctx.row_of_rep.get(group.representative_image_id) if group else None
        if row is None:
            raise StoreError(
                "not_in_round",
                f"image {image_id} was excluded or invalid in round {round_number}",
            )
        # ask for one extra neighbor: the query's own representative comes
        # back at distance 0, which is how dedup siblings surface
        found = ann.query_knn(
            ctx.index(), ctx.matrix, ctx.matrix[row], k + 1, checks=checks
        )
        labels = store.labels_for_round(project_id, round_number)
        items = []
        for nrow, distance in found.neighbors:
            cluster = int(ctx.model.labels[nrow])
            event = labels.get(cluster)
            for member_id in ctx.expand_row(nrow):
                if member_id == image_id:
                    continue
                rec = ctx.by_id[member_id]
                items.append(
                    {
                        "image_id": member_id,
                        "path": rec.path,
                        "thumbnail": rec.content_hash,
                        "distance": float(distance),
                        "cluster_index": cluster,
                        "cluster_label": event.label if event else UNTAGGED,
                    }
                )
        return {"query": image_id, "k": k, "neighbors": items[:k]}

    # --- thumbnails -------------------------------------------------------

    @app.get("/api/thumbnails/{content_hash}")
    def thumbnail(content_hash: str):
        if not content_hash.isalnum():
            raise _bad("content hash must be alphanumeric")
        path = thumb_path(store.thumbs_dir(), content_hash)
        if not path.exists():
            raise StoreError("unknown_thumbnail", f"no thumbnail for {content_hash}")
        return Response(
            content=path.read_bytes(),
            media_type="image/jpeg",
            headers={
                "Cache-Control": "public, max-age=31536000, immutable",
                "ETag": f'"{content_hash}"',
            },
        )

    return app


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise _bad("request body must be JSON")
    if not isinstance(body, dict):
        raise _bad("request body must be a JSON object")
    return body


def _project_json(project) -> dict:
    return {
        "project_id": project.project_id,
        "name": project.name,
        "corpus_root": project.corpus_root,
        "created_at": project.created_at,
    }


def _event_json(event) -> dict:
    return {
        "seq": event.seq,
        "round": event.round,
        "cluster_index": event.cluster_index,
        "label": event.label,
        "note": event.note,
        "author": event.author,
        "timestamp": event.timestamp,
    }


def _round_config(body: dict) -> RoundConfig:
    emb = body.get("embedder") or {}
    if not isinstance(emb, dict):
        raise _bad("embedder must be a JSON object")
    try:
        embedder = EmbedderConfig(
            backend=emb.get("backend", "reference"),
            dim=int(emb.get("dim", EmbedderConfig.dim)),
            batch_size=int(emb.get("batch_size", EmbedderConfig.batch_size)),
            normalize=emb.get("normalize", "none"),
            command=tuple(emb.get("command", ())),
        )
        k = body.get("k")
        config = RoundConfig(
            k=None if k is None else int(k),
            seed=int(body.get("seed", 0)),
            embedder=embedder,
            prefilter_min_frequency=(
                None
                if body.get("prefilter_min_frequency") is None
                else int(body["prefilter_min_frequency"])
            ),
            prefilter_hashes=tuple(body.get("prefilter_hashes", ())),
        )
    except (TypeError, ValueError) as exc:
        raise _bad(f"invalid round config: {exc}")
    return config
