"""Two-stage retrieval: feature-space kNN ranking, then geometric re-ranking."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .index import GEOMETRIC, CandidateSet, FeatureIndex, knn
from .metrics import METRICS, build_spatial_index, point_set_distance
from .pointcloud import Database, PointCloud

DEFAULT_K = 90
DEFAULT_METRIC = "mscd"
THREADS_ENV = "SHAPE_RERANK_THREADS"


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            n = int(value)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = DEFAULT_K
    metric: str = DEFAULT_METRIC
    rerank: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}; expected one of {METRICS}")


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    initial: CandidateSet
    final: CandidateSet


def rank(query_feature, index: FeatureIndex, k: int = DEFAULT_K) -> CandidateSet:
    return knn(index, query_feature, k)


def rerank(
    query_cloud: PointCloud,
    candidates: CandidateSet,
    database: Database,
    metric: str = DEFAULT_METRIC,
    threads: int | None = None,
) -> CandidateSet:
    """Re-order ``candidates`` by ascending ``metric(query, model)``.

    The query is the source set and each CAD model the target, whose cached
    spatial index is reused. Ties fall back to ascending id.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    ids = candidates.ids
    for mid in ids:
        database.cloud(mid)  # raises UnknownModelId early
    query_index = build_spatial_index(query_cloud) if metric == "cd" else None

    def score(mid):
        return point_set_distance(
            metric, query_cloud, database.cloud(mid), database.spatial_index(mid), query_index
        )

    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(ids) <= 1:
        scores = [score(mid) for mid in ids]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(score, ids))
    return CandidateSet.from_scores(zip(ids, scores), GEOMETRIC)


def retrieve(
    query: PointCloud,
    query_feature,
    index: FeatureIndex,
    database: Database,
    config: RetrievalConfig = RetrievalConfig(),
    threads: int | None = None,
) -> RetrievalResult:
    initial = rank(query_feature, index, config.k)
    if config.rerank:
        final = rerank(query, initial, database, config.metric, threads)
    else:
        final = initial
    return RetrievalResult(query.id, initial, final)
