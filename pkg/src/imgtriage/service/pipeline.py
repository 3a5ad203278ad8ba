"""Round execution: scan -> dedup -> prefilter -> embed -> cluster -> summarize.

Each round freezes its inputs and artifacts in its own directory; running a
new round never touches earlier ones, which supports corpora that keep
growing between rounds.  A stage failure marks the round failed with the
stage name and diagnostics.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from imgtriage import kmeans
from imgtriage.embedding import (
    EmbedderConfig,
    ReferenceEmbedder,
    embed_representatives,
    l2_normalize,
    run_external_embedder,
    write_vectors,
)
from imgtriage.ingest import (
    deduplicate,
    exclude_high_frequency,
    scan_corpus,
    tally_frequencies,
    write_groups,
    write_manifest,
    write_tally,
)
from imgtriage.service.store import (
    ROUND_COMPLETE,
    ROUND_FAILED,
    ROUND_RUNNING,
    ProjectStore,
    StoreError,
    _utcnow,
)
from imgtriage.service.thumbs import ensure_thumbnails

log = logging.getLogger(__name__)


class RoundValidationError(Exception):
    """Precondition failure detected before any round state is persisted."""


@dataclass(frozen=True)
class RoundConfig:
    k: int | None = None  # None: default rule (150, capped at corpus size)
    seed: int = 0
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    prefilter_min_frequency: int | None = None
    prefilter_hashes: tuple[str, ...] = ()
    hash_name: str = "sha256"
    max_iters: int = kmeans.DEFAULT_MAX_ITERS
    tol: float = kmeans.DEFAULT_TOL

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["embedder"]["command"] = list(self.embedder.command)
        d["prefilter_hashes"] = list(self.prefilter_hashes)
        return d


def run_round(
    store: ProjectStore,
    project_id: str,
    config: RoundConfig,
    round_number: int | None = None,
) -> int:
    """Execute one clustering round; returns the round number.

    When ``round_number`` is None the round directory is created only after
    the k-vs-corpus precondition passes (validation failures leave no trace).
    The HTTP layer pre-allocates a number instead, so validation failures on
    the background worker still surface as a failed round.
    """
    project = store.get_project(project_id)
    pre_allocated = round_number is not None
    if pre_allocated:
        meta = _base_meta(round_number, config)
        store.write_round_meta(project_id, round_number, meta)

    stage = "scan"
    timings: dict[str, float] = {}
    try:
        t0 = time.perf_counter()
        records = scan_corpus(project.corpus_root, hash_name=config.hash_name)
        timings["scan"] = time.perf_counter() - t0

        stage = "thumbnails"
        t0 = time.perf_counter()
        ensure_thumbnails(records, project.corpus_root, store.thumbs_dir())
        timings["thumbnails"] = time.perf_counter() - t0

        stage = "dedup"
        t0 = time.perf_counter()
        groups = deduplicate(records)
        tally = tally_frequencies(groups, records)
        timings["dedup"] = time.perf_counter() - t0

        stage = "prefilter"
        if config.prefilter_min_frequency is not None:
            records = exclude_high_frequency(
                records, groups, min_frequency=config.prefilter_min_frequency
            )
        elif config.prefilter_hashes:
            records = exclude_high_frequency(
                records, groups, content_hashes=config.prefilter_hashes
            )

        stage = "validate"
        by_id = {r.image_id: r for r in records}
        reps = [
            g for g in groups if by_id[g.representative_image_id].excluded == "none"
        ]
        k = kmeans.resolve_k(len(reps), config.k)
        if k < 1 or k > len(reps):
            raise RoundValidationError(
                f"k={k} but the corpus has {len(reps)} non-excluded representatives"
            )

        if not pre_allocated:
            round_number = store.allocate_round(project_id)
            meta = _base_meta(round_number, config)
            store.write_round_meta(project_id, round_number, meta)
        rdir = store.round_dir(project_id, round_number)

        stage = "freeze"
        write_manifest(records, rdir / "manifest.jsonl")
        write_groups(groups, rdir / "groups.json")
        write_tally(tally, rdir / "tally.csv")

        stage = "embed"
        t0 = time.perf_counter()
        ordinal_of = {r.image_id: i for i, r in enumerate(records)}
        if config.embedder.backend == "reference":
            embedder = ReferenceEmbedder(config.embedder, project.corpus_root, records)
            rep_ids, matrix, failures = embed_representatives(
                reps, records, config.embedder, embedder
            )
            if failures:
                details = "; ".join(f"{f.image_id}: {f.reason}" for f in failures[:10])
                raise RuntimeError(
                    f"{len(failures)} representative(s) failed to embed: {details}"
                )
        else:
            rep_records = sorted(
                (by_id[g.representative_image_id] for g in reps),
                key=lambda r: ordinal_of[r.image_id],
            )
            rep_manifest = rdir / "representatives.jsonl"
            write_manifest(rep_records, rep_manifest)
            _, matrix = run_external_embedder(
                rep_manifest, rdir / "vectors.raw.fvec", config.embedder
            )
            if config.embedder.normalize == "l2":
                matrix = l2_normalize(matrix)
            rep_ids = [r.image_id for r in rep_records]
        ordinals = np.array([ordinal_of[i] for i in rep_ids], dtype=np.int64)
        write_vectors(rdir / "vectors.fvec", ordinals, matrix)
        timings["embed"] = time.perf_counter() - t0

        stage = "cluster"
        t0 = time.perf_counter()
        model = kmeans.kmeans_fit(
            matrix,
            k=k,
            seed=config.seed,
            max_iters=config.max_iters,
            tol=config.tol,
            ordinals=ordinals,
        )
        kmeans.write_model(model, rdir / "model.kmeans")
        timings["cluster"] = time.perf_counter() - t0

        stage = "summarize"
        summaries = kmeans.summarize_clusters(model, rep_ids, groups)
        (rdir / "summaries.json").write_text(
            json.dumps([dataclasses.asdict(s) for s in summaries], indent=1),
            encoding="utf-8",
        )

        meta.update(
            status=ROUND_COMPLETE,
            k=k,
            finished_at=_utcnow(),
            timings=timings,
            counts={
                "total": len(records),
                "valid": sum(1 for r in records if r.valid),
                "invalid": sum(1 for r in records if not r.valid),
                "excluded_prefilter": sum(
                    1 for r in records if r.excluded == "high_frequency"
                ),
                "representatives": len(rep_ids),
                "clustered_images": sum(s.size_total_images for s in summaries),
            },
            inertia=model.inertia,
            iterations_run=model.iterations_run,
        )
        store.write_round_meta(project_id, round_number, meta)
        log.info(
            "round %d complete for %s: %d images, %d clusters",
            round_number,
            project_id,
            len(records),
            k,
        )
        return round_number
    except RoundValidationError as exc:
        if pre_allocated:
            _mark_failed(store, project_id, round_number, "validate", exc)
        raise
    except StoreError:
        raise
    except Exception as exc:
        log.exception("round failed at stage %s", stage)
        if round_number is not None:
            _mark_failed(store, project_id, round_number, stage, exc)
        raise


def _base_meta(round_number: int, config: RoundConfig) -> dict:
    return {
        "round": round_number,
        "status": ROUND_RUNNING,
        "k": config.k,
        "seed": config.seed,
        "config": config.to_json(),
        "created_at": _utcnow(),
    }


def _mark_failed(
    store: ProjectStore, project_id: str, round_number: int, stage: str, exc: Exception
) -> None:
    try:
        meta = store.round_meta(project_id, round_number)
    except StoreError:
        meta = _base_meta(round_number, RoundConfig())
    meta.update(status=ROUND_FAILED, stage=stage, error=str(exc), finished_at=_utcnow())
    store.write_round_meta(project_id, round_number, meta)
