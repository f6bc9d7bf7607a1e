"""Command-line interface: ``shaperank {build-db,query,evaluate,gen-synthetic,bench}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .dataset import (
    DescriptorOptions,
    build_database_dir,
    load_database_dir,
    load_entry_cloud,
    read_manifest,
    write_synthetic,
)
from .descriptor import D2_BINS, D2_PAIRS, load_features
from .errors import ShapeRerankError
from .evaluation import evaluate
from .index import CandidateSet
from .metrics import METRICS
from .pipeline import DEFAULT_K, RetrievalConfig, RetrievalResult, default_threads, rank, rerank, retrieve
from .pointcloud import DEFAULT_MIN_POINTS, DEFAULT_RESOLUTION, PointCloud, load_point_cloud
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger("shaperank")


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _load_queries(manifest, bundle, normalize_query, min_points):
    """Load and prepare manifest queries; returns (prepared clouds, features, filtered ids)."""
    external = None
    if not bundle.builtin_features:
        if manifest.query_features is None:
            raise ShapeRerankError("database uses external features but the manifest has no query feature file")
        external = load_features(manifest.query_features)
    clouds, feats, filtered = [], [], []
    for entry in manifest.queries:
        if entry.ground_truth is None:
            continue
        raw = load_entry_cloud(entry)
        if len(raw) < min_points:
            filtered.append(entry.id)
            continue
        cloud = bundle.prepare_query(raw, normalize_query)
        clouds.append(cloud)
        feats.append(bundle.query_feature(cloud, external))
    return clouds, feats, filtered


def _candidates_json(cs: CandidateSet):
    return [{"id": mid, "score": score} for mid, score in cs]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_build_db(args) -> int:
    manifest = read_manifest(args.manifest)
    t0 = time.perf_counter()
    bundle = build_database_dir(
        manifest,
        args.out_dir,
        resolution=args.resolution,
        seed=args.seed,
        descriptor=DescriptorOptions(args.bins, args.pairs, args.seed),
    )
    elapsed = time.perf_counter() - t0
    print(f"models (S): {bundle.index.size}")
    print(f"feature dim (d): {bundle.index.dim}")
    print(f"features: {bundle.features.source}")
    print(f"search: {'kd-tree' if bundle.index.uses_kdtree else 'linear scan'}")
    print(f"elapsed: {elapsed:.3f} s")
    return 0


def cmd_query(args) -> int:
    bundle = load_database_dir(args.db_dir)
    raw = load_point_cloud(args.cloud)
    if args.id:
        raw = PointCloud(raw.points, args.id)
    cloud = bundle.prepare_query(raw, args.normalize_query)
    external = load_features(args.features) if args.features else None
    feature = bundle.query_feature(cloud, external)
    config = RetrievalConfig(k=args.k, metric=args.metric, rerank=not args.no_rerank)
    result = retrieve(cloud, feature, bundle.index, bundle.database, config, args.threads)
    if args.format == "json":
        out = {
            "query": result.query_id,
            "metric": config.metric if config.rerank else None,
            "kind": result.final.kind,
            "candidates": _candidates_json(result.final),
            "initial": _candidates_json(result.initial),
        }
        print(json.dumps(out, indent=1))
    else:
        for pos, (mid, score) in enumerate(result.final, 1):
            print(f"{pos}\t{mid}\t{score:.4f}")
    return 0


def _run_retrievals(bundle, clouds, feats, config, threads):
    return [
        retrieve(c, f, bundle.index, bundle.database, config, threads) for c, f in zip(clouds, feats)
    ]


def cmd_evaluate(args) -> int:
    bundle = load_database_dir(args.db_dir)
    manifest = read_manifest(args.manifest)
    gt = manifest.ground_truth()
    gt.validate(bundle.database)
    clouds, feats, filtered = _load_queries(manifest, bundle, args.normalize_query, args.min_points)
    if not clouds:
        raise ShapeRerankError("no evaluable queries (none with ground truth above the point threshold)")
    out_dir = Path(args.out) if args.out else Path(args.db_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    metrics = list(METRICS) if args.compare_metrics else [args.metric]
    ks = sorted(set(args.k_list))
    summary = {}
    for metric in metrics:
        config = RetrievalConfig(k=args.k, metric=metric, rerank=not args.no_rerank)
        results = _run_retrievals(bundle, clouds, feats, config, args.threads)
        report = evaluate(results, gt, bundle.database, ks, metric)
        report.values["queries_filtered"] = len(filtered)
        (out_dir / f"report_{metric}.txt").write_text(report.to_text(), encoding="utf-8")
        if args.json:
            (out_dir / f"report_{metric}.json").write_text(report.to_json(), encoding="utf-8")
        summary[metric] = report
        if not args.compare_metrics:
            sys.stdout.write(report.to_text())

    if args.compare_metrics:
        header = "metric  " + "  ".join(f"RA@{k:<4d}" for k in ks) + "  top1_cd  gt_rank"
        lines = [header]
        first = next(iter(summary.values()))
        row = "feature " + "  ".join(f"{first[f'initial.ra@{k}.instance_avg']:.4f}" for k in ks)
        row += f"  {first['initial.top1_chamfer.instance_avg']:.4f}  {first['initial.gt_ranking.instance_avg']:.4f}"
        lines.append(row)
        for metric, rep in summary.items():
            row = f"{metric:<8s}" + "  ".join(f"{rep[f'final.ra@{k}.instance_avg']:.4f}" for k in ks)
            row += f"  {rep['final.top1_chamfer.instance_avg']:.4f}  {rep['final.gt_ranking.instance_avg']:.4f}"
            lines.append(row)
        text = "\n".join(lines) + "\n"
        (out_dir / "compare_metrics.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
    return 0


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        models=args.models,
        classes=args.classes,
        queries=args.queries,
        points=args.points,
        crop=args.crop,
        noise=args.noise,
        outlier_frac=args.outlier_frac,
        outlier_extent=args.outlier_extent,
        jitter=args.jitter,
    )
    dataset = generate_synthetic(spec, args.seed)
    path = write_synthetic(dataset, args.out_dir)
    print(f"wrote {path} ({spec.models} models, {spec.classes} classes, {spec.queries} queries)")
    return 0


def results_digest(results) -> str:
    h = hashlib.sha256()
    for r in results:
        h.update(r.query_id.encode())
        for part in (r.initial, r.final):
            for mid, score in part:
                h.update(f"{mid}:{score!r};".encode())
    return h.hexdigest()


def cmd_bench(args) -> int:
    bundle = load_database_dir(args.db_dir)
    manifest = read_manifest(args.manifest)
    clouds, feats, _ = _load_queries(manifest, bundle, args.normalize_query, args.min_points)
    if args.max_queries:
        clouds, feats = clouds[: args.max_queries], feats[: args.max_queries]
    if not clouds:
        raise ShapeRerankError("no queries to benchmark")
    threads = args.threads
    k_max = max(args.k_list)
    db = bundle.database

    t0 = time.perf_counter()
    initial = [rank(f, bundle.index, k_max) for f in feats]
    t_search = time.perf_counter() - t0

    db.clear_index_cache()
    t0 = time.perf_counter()
    for cands in initial:
        for mid in cands.ids:
            db.spatial_index(mid)
    t_build = time.perf_counter() - t0

    rows = []
    finals = None
    for k in sorted(set(args.k_list)):
        t0 = time.perf_counter()
        out = [rerank(c, cs.top(k), db, args.metric, threads) for c, cs in zip(clouds, initial)]
        elapsed = time.perf_counter() - t0
        pairs = sum(len(c) * min(k, len(cs)) for c, cs in zip(clouds, initial))
        rows.append((k, elapsed, pairs / elapsed if elapsed > 0 else float("inf")))
        if k == k_max:
            finals = out

    results = [RetrievalResult(c.id, cs, fs) for c, cs, fs in zip(clouds, initial, finals)]
    print(f"queries: {len(clouds)}  threads: {threads}  metric: {args.metric}  models: {db.size}")
    print(f"{'stage':<22s} {'k':>4s} {'seconds':>10s} {'ms/query':>10s} {'points/s':>12s}")
    n = len(clouds)
    print(f"{'feature-search':<22s} {k_max:>4d} {t_search:>10.4f} {1000 * t_search / n:>10.3f} {'-':>12s}")
    print(f"{'spatial-index-build':<22s} {k_max:>4d} {t_build:>10.4f} {1000 * t_build / n:>10.3f} {'-':>12s}")
    for k, elapsed, pps in rows:
        print(f"{'rerank':<22s} {k:>4d} {elapsed:>10.4f} {1000 * elapsed / n:>10.3f} {pps:>12.0f}")
    print(f"digest: {results_digest(results)}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_query_opts(p):
    p.add_argument("--threads", type=_positive, default=None,
                   help="worker threads (default: $SHAPE_RERANK_THREADS or CPU count)")
    p.add_argument("--normalize-query", action="store_true",
                   help="re-centre and re-scale queries (off: queries are assumed CAD-aligned)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shaperank", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="normalize models, compute features, build the feature index")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.add_argument("--resolution", type=_positive, default=DEFAULT_RESOLUTION)
    p.add_argument("--bins", type=_positive, default=D2_BINS)
    p.add_argument("--pairs", type=_positive, default=D2_PAIRS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("query", help="retrieve the closest models for one scan")
    p.add_argument("db_dir")
    p.add_argument("cloud")
    p.add_argument("--k", type=_positive, default=DEFAULT_K)
    p.add_argument("--metric", choices=METRICS, default="mscd")
    p.add_argument("--no-rerank", action="store_true")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--features", help="feature file holding the query's external feature")
    p.add_argument("--id", help="query id (default: file stem)")
    _add_query_opts(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="evaluate retrieval over the manifest's queries")
    p.add_argument("db_dir")
    p.add_argument("manifest")
    p.add_argument("--k", type=_positive, default=DEFAULT_K, help="candidate count (search range)")
    p.add_argument("--k-list", type=_k_list, default=[1, 5], help="comma separated RA cut-offs")
    p.add_argument("--metric", choices=METRICS, default="mscd")
    p.add_argument("--compare-metrics", action="store_true", help="run cd, scd and mscd side by side")
    p.add_argument("--no-rerank", action="store_true")
    p.add_argument("--min-points", type=int, default=DEFAULT_MIN_POINTS,
                   help="skip queries with fewer points")
    p.add_argument("--out", help="report directory (default: db_dir)")
    p.add_argument("--json", action="store_true", help="also write JSON reports")
    _add_query_opts(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic benchmark dataset")
    p.add_argument("out_dir")
    d = SyntheticSpec()
    p.add_argument("--models", type=int, default=d.models)
    p.add_argument("--classes", type=int, default=d.classes)
    p.add_argument("--queries", type=int, default=d.queries)
    p.add_argument("--points", type=int, default=d.points)
    p.add_argument("--crop", type=float, default=d.crop)
    p.add_argument("--noise", type=float, default=d.noise)
    p.add_argument("--outlier-frac", type=float, default=d.outlier_frac)
    p.add_argument("--outlier-extent", type=float, default=d.outlier_extent)
    p.add_argument("--jitter", type=float, default=d.jitter)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("bench", help="time feature search and re-ranking")
    p.add_argument("db_dir")
    p.add_argument("manifest")
    p.add_argument("--k-list", type=_k_list, default=[10, 30, 90])
    p.add_argument("--metric", choices=METRICS, default="mscd")
    p.add_argument("--max-queries", type=int, default=0)
    p.add_argument("--min-points", type=int, default=DEFAULT_MIN_POINTS)
    _add_query_opts(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        try:
            args.threads = default_threads()
        except ValueError as exc:
            print(f"shaperank: error: {exc}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (ShapeRerankError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        print(f"shaperank: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
