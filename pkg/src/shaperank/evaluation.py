"""Retrieval quality metrics and evaluation reports.

All functions take a list of :class:`~shaperank.pipeline.RetrievalResult` and
a :class:`GroundTruth`; ``use_final`` selects the re-ranked list (True) or the
feature-ranked list (False).
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .errors import MissingCategory, MissingGroundTruth, UnknownModelId
from .metrics import mscd
from .pointcloud import Database


@dataclass(frozen=True)
class GroundTruth:
    """Query id -> ground-truth model id, plus each query's category."""

    models: Mapping[str, str]
    categories: Mapping[str, str] = field(default_factory=dict)

    def model(self, query_id: str) -> str:
        try:
            return self.models[query_id]
        except KeyError:
            raise MissingGroundTruth(f"no ground truth for query {query_id!r}") from None

    def category(self, query_id: str, database: Database | None = None) -> str:
        if query_id in self.categories:
            return self.categories[query_id]
        if database is not None:
            return database.category(self.model(query_id))
        raise MissingCategory(f"no category for query {query_id!r}")

    def validate(self, database: Database) -> None:
        for qid, mid in self.models.items():
            if mid not in database:
                raise UnknownModelId(f"ground truth of {qid!r} references unknown model {mid!r}")


def _chosen(result, use_final):
    return result.final if use_final else result.initial


def hits_at_k(results, gt: GroundTruth, k: int, use_final: bool = True) -> dict[str, float]:
    """Per-query 0/1 indicator of the ground truth being in the top ``k``."""
    out = {}
    for r in results:
        target = gt.model(r.query_id)
        out[r.query_id] = 1.0 if target in _chosen(r, use_final).ids[:k] else 0.0
    return out


def topk_accuracy(results, gt: GroundTruth, k: int, use_final: bool = True) -> float:
    """Fraction of queries whose ground-truth model is among the first ``k`` candidates."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = hits_at_k(results, gt, k, use_final)
    if not hits:
        raise ValueError("no results to evaluate")
    return math.fsum(hits.values()) / len(hits)


def top1_distances(results, gt: GroundTruth, database: Database, use_final: bool = True) -> dict[str, float]:
    out = {}
    for r in results:
        target = database.cloud(gt.model(r.query_id))
        chosen = _chosen(r, use_final)
        if len(chosen) == 0:
            raise ValueError(f"query {r.query_id!r} has an empty candidate set")
        top = database.cloud(chosen.ids[0])
        # retrieved model is the source set, ground truth the target
        out[r.query_id] = mscd(top, target, index=database.spatial_index(target.id))
    return out


def top1_chamfer(results, gt: GroundTruth, database: Database, use_final: bool = True) -> float:
    """Mean MSCD from each query's top-1 retrieved model to its ground-truth model."""
    d = top1_distances(results, gt, database, use_final)
    if not d:
        raise ValueError("no results to evaluate")
    return math.fsum(d.values()) / len(d)


class Ranking(NamedTuple):
    mean: float
    counted: int
    excluded: int


def gt_ranks(results, gt: GroundTruth, use_final: bool = True) -> dict[str, int | None]:
    return {r.query_id: _chosen(r, use_final).rank_of(gt.model(r.query_id)) for r in results}


def gt_ranking(results, gt: GroundTruth, use_final: bool = True) -> Ranking:
    """Mean 1-based rank of the ground truth in the candidate list.

    Queries whose ground truth is not among the candidates have no rank; they
    are left out of the mean and counted in ``excluded``. ``mean`` is NaN if
    every query is excluded.
    """
    ranks = gt_ranks(results, gt, use_final)
    found = [r for r in ranks.values() if r is not None]
    mean = math.fsum(found) / len(found) if found else math.nan
    return Ranking(mean, len(found), len(ranks) - len(found))


def category_ratio(results, database: Database, gt: GroundTruth, k: int = 5, use_final: bool = False) -> float:
    """Fraction of top-``k`` candidates sharing the query's ground-truth category."""
    total = 0
    same = 0
    for r in results:
        want = gt.category(r.query_id, database)
        for mid in _chosen(r, use_final).ids[:k]:
            try:
                cat = database.categories[mid]
            except KeyError:
                raise MissingCategory(f"candidate {mid!r} has no category label") from None
            total += 1
            same += cat == want
    if total == 0:
        raise ValueError("no candidates to evaluate")
    return same / total


class Averages(NamedTuple):
    class_avg: float
    instance_avg: float
    per_class: dict


def class_and_instance_averages(per_query: Mapping[str, float], categories: Mapping[str, str]) -> Averages:
    """Instance average over all queries and unweighted mean of per-class means."""
    if not per_query:
        raise ValueError("no per-query values to average")
    groups = defaultdict(list)
    for qid, value in per_query.items():
        if qid not in categories:
            raise MissingCategory(f"query {qid!r} has no category")
        groups[categories[qid]].append(value)
    per_class = {c: math.fsum(v) / len(v) for c, v in sorted(groups.items())}
    instance = math.fsum(per_query.values()) / len(per_query)
    klass = math.fsum(per_class.values()) / len(per_class)
    return Averages(klass, instance, per_class)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Flat ``key -> value`` table of evaluation results.

    Keys look like ``final.ra@1.instance_avg``, ``initial.gt_ranking.class.chair``
    or ``queries``. Integer-valued counts are kept as ``int``.
    """

    values: dict
    metric: str = "mscd"

    @property
    def queries(self) -> int:
        return self.values["queries"]

    def __getitem__(self, key):
        return self.values[key]

    def to_text(self) -> str:
        lines = [f"# metric={self.metric}"]
        for key in sorted(self.values):
            v = self.values[key]
            lines.append(f"{key} {v}" if isinstance(v, int) else f"{key} {v:.4f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in self.values.items()}
        return json.dumps({"metric": self.metric, "values": clean}, sort_keys=True, indent=1) + "\n"


def _add_averages(values, name, per_query, categories):
    if not per_query:
        values[f"{name}.instance_avg"] = math.nan
        values[f"{name}.class_avg"] = math.nan
        return
    avg = class_and_instance_averages(per_query, categories)
    values[f"{name}.instance_avg"] = avg.instance_avg
    values[f"{name}.class_avg"] = avg.class_avg
    for c, v in avg.per_class.items():
        values[f"{name}.class.{c}"] = v


def evaluate(
    results: Sequence,
    gt: GroundTruth,
    database: Database,
    ks: Sequence[int] = (1, 5),
    metric: str = "mscd",
    category_k: int = 5,
) -> EvalReport:
    """Compute accuracy, top-1 distance, ground-truth rank and category ratio.

    Every per-query metric is reported as an instance average, a class average
    and per class, for both the initial and the final candidate lists.
    """
    if not results:
        raise ValueError("no results to evaluate")
    categories = {r.query_id: gt.category(r.query_id, database) for r in results}
    values: dict = {"queries": len(results)}
    for which, use_final in (("initial", False), ("final", True)):
        for k in sorted(set(ks)):
            _add_averages(values, f"{which}.ra@{k}", hits_at_k(results, gt, k, use_final), categories)
        _add_averages(values, f"{which}.top1_chamfer", top1_distances(results, gt, database, use_final), categories)
        ranks = {q: float(r) for q, r in gt_ranks(results, gt, use_final).items() if r is not None}
        _add_averages(values, f"{which}.gt_ranking", ranks, categories)
        values[f"{which}.gt_excluded"] = len(results) - len(ranks)
        values[f"{which}.category_ratio@{category_k}"] = category_ratio(
            results, database, gt, category_k, use_final
        )
    return EvalReport(values, metric)
