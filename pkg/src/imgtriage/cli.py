"""Command-line driver: one subcommand per pipeline stage, plus ``serve``.

Stages hand off through files (manifest, groups, vectors, model) so any
stage can be rerun or inspected in isolation.  Logs go to stderr; output
data goes only to the files named by ``--out``.

Exit codes: 0 success, 1 validation error (bad flags or bad input files),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from imgtriage import ann, kmeans
from imgtriage.embedding import (
    EmbedderConfig,
    ReferenceEmbedder,
    VectorsFileError,
    embed_representatives,
    l2_normalize,
    read_vectors,
    run_external_embedder,
    write_vectors,
)
from imgtriage.ingest import (
    DEFAULT_HASH,
    IngestError,
    deduplicate,
    exclude_high_frequency,
    read_groups,
    read_manifest,
    scan_corpus,
    tally_frequencies,
    write_groups,
    write_manifest,
    write_tally,
)
from imgtriage.service.report import build_report, collapse_latest
from imgtriage.service.store import StoreError, TagEvent

log = logging.getLogger("imgtriage")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

DATA_DIR_ENV = "IMGTRIAGE_DATA"

# inputs that fail validation, as opposed to stages that die mid-run
_VALIDATION_ERRORS = (
    ValueError,
    IngestError,
    VectorsFileError,
    kmeans.KMeansError,
    ann.AnnError,
    StoreError,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imgtriage", description=__doc__.splitlines()[0])
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for info, -vv for debug (default: warnings only)",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("scan", help="walk a corpus and write the image manifest")
    p.add_argument("--corpus", required=True, help="corpus root directory")
    p.add_argument("--out", required=True, help="manifest output path (JSONL)")
    p.add_argument("--hash", default=DEFAULT_HASH, help="content hash algorithm")
    p.add_argument("--workers", type=int, default=4, help="scan worker threads")
    p.add_argument(
        "--no-recurse", action="store_true", help="scan only the top directory"
    )
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("dedup", help="group byte-identical images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="groups output path (JSON)")
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("tally", help="write the per-hash frequency table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--out", required=True, help="tally output path (CSV)")
    p.set_defaults(func=_cmd_tally)

    p = sub.add_parser("exclude", help="mark high-frequency groups as excluded")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--out", required=True, help="updated manifest output path")
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument(
        "--min-frequency", type=int, help="exclude groups at or above this frequency"
    )
    how.add_argument(
        "--hash",
        dest="hashes",
        action="append",
        help="exclude this content hash (repeatable)",
    )
    p.set_defaults(func=_cmd_exclude)

    p = sub.add_parser("embed", help="embed dedup representatives into vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--corpus", help="corpus root (required for --backend reference)")
    p.add_argument("--out", required=True, help="vectors output path")
    p.add_argument("--backend", choices=("reference", "external"), default="reference")
    p.add_argument("--dim", type=int, default=EmbedderConfig.dim)
    p.add_argument("--batch-size", type=int, default=EmbedderConfig.batch_size)
    p.add_argument("--normalize", choices=("none", "l2"), default="none")
    p.add_argument(
        "--command",
        nargs="+",
        default=(),
        help="external embedder argv prefix (with --backend external)",
    )
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("cluster", help="fit k-means over an embedded vector set")
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument(
        "--k", type=int, help="cluster count (default: 150, capped at corpus size)"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=kmeans.DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=kmeans.DEFAULT_TOL)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("knn", help="nearest neighbors of one embedded image")
    p.add_argument("--vectors", required=True)
    p.add_argument("--query-ordinal", type=int, required=True)
    p.add_argument("--out", required=True, help="neighbor list output path (CSV)")
    p.add_argument("--k", type=int, default=ann.DEFAULT_K)
    p.add_argument("--trees", type=int, default=ann.DEFAULT_TREE_COUNT)
    p.add_argument("--leaf-size", type=int, default=ann.DEFAULT_LEAF_SIZE)
    p.add_argument(
        "--checks", type=int, default=ann.DEFAULT_CHECKS, help="<= 0 means exhaustive"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--exact", action="store_true", help="linear-scan oracle instead of the forest"
    )
    p.set_defaults(func=_cmd_knn)

    p = sub.add_parser("precision", help="forest-vs-exact precision evaluation")
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True, help="precision report output path (CSV)")
    p.add_argument("--k", type=int, default=ann.DEFAULT_K)
    p.add_argument("--sample", type=int, help="query sample size (default: all rows)")
    p.add_argument("--trees", type=int, default=ann.DEFAULT_TREE_COUNT)
    p.add_argument("--leaf-size", type=int, default=ann.DEFAULT_LEAF_SIZE)
    p.add_argument("--checks", type=int, default=ann.DEFAULT_CHECKS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--with-timings",
        action="store_true",
        help="include wall-clock lines in the CSV (breaks rerun byte-identity)",
    )
    p.set_defaults(func=_cmd_precision)

    p = sub.add_parser("report", help="categorization report from pipeline files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--tags", help="tag event log (JSONL); omit for all-untagged")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--format", choices=("csv", "structured"), default="csv")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="run the HTTP review service")
    p.add_argument(
        "--data-dir",
        default=os.environ.get(DATA_DIR_ENV, "imgtriage-data"),
        help=f"service state directory (or ${DATA_DIR_ENV})",
    )
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


# --- subcommands ----------------------------------------------------------


def _cmd_scan(args) -> int:
    _require(args.workers >= 1, "--workers must be >= 1")
    records = scan_corpus(
        args.corpus,
        recurse=not args.no_recurse,
        hash_name=args.hash,
        workers=args.workers,
    )
    write_manifest(records, args.out)
    invalid = sum(1 for r in records if not r.valid)
    log.info("scanned %d files (%d invalid) -> %s", len(records), invalid, args.out)
    return EXIT_OK


def _cmd_dedup(args) -> int:
    records = read_manifest(args.manifest)
    groups = deduplicate(records)
    write_groups(groups, args.out)
    dups = sum(g.frequency - 1 for g in groups)
    log.info("%d groups (%d duplicate files) -> %s", len(groups), dups, args.out)
    return EXIT_OK


def _cmd_tally(args) -> int:
    records = read_manifest(args.manifest)
    groups = read_groups(args.groups)
    write_tally(tally_frequencies(groups, records), args.out)
    return EXIT_OK


def _cmd_exclude(args) -> int:
    records = read_manifest(args.manifest)
    groups = read_groups(args.groups)
    if args.min_frequency is not None:
        updated = exclude_high_frequency(records, groups, min_frequency=args.min_frequency)
    else:
        updated = exclude_high_frequency(records, groups, content_hashes=args.hashes)
    write_manifest(updated, args.out)
    n = sum(1 for r in updated if r.excluded == "high_frequency")
    log.info("excluded %d images -> %s", n, args.out)
    return EXIT_OK


def _cmd_embed(args) -> int:
    records = read_manifest(args.manifest)
    groups = read_groups(args.groups)
    config = EmbedderConfig(
        backend=args.backend,
        dim=args.dim,
        batch_size=args.batch_size,
        normalize=args.normalize,
        command=tuple(args.command),
    )
    ordinal_of = {r.image_id: i for i, r in enumerate(records)}
    by_id = {r.image_id: r for r in records}

    if config.backend == "reference":
        _require(args.corpus is not None, "--corpus is required with --backend reference")
        embedder = ReferenceEmbedder(config, args.corpus, records)
        rep_ids, matrix, failures = embed_representatives(groups, records, config, embedder)
        if failures:
            for f in failures:
                log.error("embed failed for %s: %s", f.image_id, f.reason)
            return EXIT_RUNTIME
    else:
        rep_records = sorted(
            (
                by_id[g.representative_image_id]
                for g in groups
                if by_id[g.representative_image_id].excluded == "none"
            ),
            key=lambda r: ordinal_of[r.image_id],
        )
        with tempfile.TemporaryDirectory(prefix="imgtriage-embed-") as tmp:
            rep_manifest = Path(tmp) / "representatives.jsonl"
            write_manifest(rep_records, rep_manifest)
            _, matrix = run_external_embedder(rep_manifest, Path(tmp) / "raw.fvec", config)
        if config.normalize == "l2":
            matrix = l2_normalize(matrix)
        rep_ids = [r.image_id for r in rep_records]

    ordinals = [ordinal_of[i] for i in rep_ids]
    write_vectors(args.out, ordinals, matrix)
    log.info("embedded %d representatives at dim %d -> %s", len(rep_ids), args.dim, args.out)
    return EXIT_OK


def _cmd_cluster(args) -> int:
    _require(args.k is None or args.k >= 1, "--k must be >= 1")
    _require(args.max_iters >= 1, "--max-iters must be >= 1")
    _require(args.tol >= 0, "--tol must be >= 0")
    ordinals, matrix = read_vectors(args.vectors)
    k = kmeans.resolve_k(matrix.shape[0], args.k)
    model = kmeans.kmeans_fit(
        matrix,
        k=k,
        seed=args.seed,
        max_iters=args.max_iters,
        tol=args.tol,
        ordinals=ordinals,
    )
    kmeans.write_model(model, args.out)
    log.info(
        "k=%d inertia=%.6g after %d iterations -> %s",
        k,
        model.inertia,
        model.iterations_run,
        args.out,
    )
    return EXIT_OK


def _load_query_row(args) -> tuple[np.ndarray, np.ndarray, int]:
    ordinals, matrix = read_vectors(args.vectors)
    rows = np.flatnonzero(ordinals == args.query_ordinal)
    if rows.size == 0:
        raise ValueError(f"ordinal {args.query_ordinal} is not in {args.vectors}")
    return ordinals, matrix, int(rows[0])


def _cmd_knn(args) -> int:
    _require(args.k >= 1, "--k must be >= 1")
    _require(args.trees >= 1, "--trees must be >= 1")
    _require(args.leaf_size >= 1, "--leaf-size must be >= 1")
    ordinals, matrix, row = _load_query_row(args)
    if args.exact:
        found = ann.exact_knn(matrix, row, args.k)
    else:
        index = ann.build_index(
            matrix,
            tree_count=args.trees,
            leaf_size=args.leaf_size,
            seed=args.seed,
            checks=args.checks,
        )
        found = ann.knn_of_row(index, matrix, row, args.k)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("rank,ordinal,distance\n")
        for rank, (nrow, dist) in enumerate(found.neighbors, start=1):
            fh.write(f"{rank},{int(ordinals[nrow])},{dist!r}\n")
    return EXIT_OK


def _cmd_precision(args) -> int:
    _require(args.k >= 1, "--k must be >= 1")
    _require(args.sample is None or args.sample >= 1, "--sample must be >= 1")
    _, matrix = read_vectors(args.vectors)
    index = ann.build_index(
        matrix,
        tree_count=args.trees,
        leaf_size=args.leaf_size,
        seed=args.seed,
        checks=args.checks,
    )
    report = ann.precision_at_k(
        matrix, index, k=args.k, sample_size=args.sample, seed=args.seed
    )
    Path(args.out).write_text(
        report.to_csv(include_timings=args.with_timings), encoding="utf-8"
    )
    log.info(
        "build %.3fs, exact %.3fs, ann %.3fs over %d queries",
        report.build_seconds,
        report.exact_seconds,
        report.ann_seconds,
        report.sample_size,
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    records = read_manifest(args.manifest)
    groups = read_groups(args.groups)
    ordinals, matrix = read_vectors(args.vectors)
    model = kmeans.recompute_distances(kmeans.read_model(args.model), ordinals, matrix)
    rep_ids = [records[int(o)].image_id for o in model.ordinals]
    summaries = [
        dataclasses.asdict(s) for s in kmeans.summarize_clusters(model, rep_ids, groups)
    ]
    labels = {}
    if args.tags:
        with open(args.tags, encoding="utf-8") as fh:
            events = [TagEvent(**json.loads(line)) for line in fh if line.strip()]
        labels = collapse_latest(events)
    report = build_report(records, summaries, labels)
    if args.format == "csv":
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    else:
        Path(args.out).write_text(
            json.dumps(report.to_json(), indent=1, sort_keys=True), encoding="utf-8"
        )
    log.info("report totals: %s", report.totals)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from imgtriage.service.app import create_app

    uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)
    return EXIT_OK


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(
        stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        raise
    except Exception:
        log.exception("stage failed")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
