import math

import numpy as np
import pytest

from shaperank.errors import MissingCategory, MissingGroundTruth, UnknownModelId
from shaperank.evaluation import (
    EvalReport,
    GroundTruth,
    category_ratio,
    class_and_instance_averages,
    evaluate,
    gt_ranking,
    top1_chamfer,
    topk_accuracy,
)
from shaperank.index import FEATURE, GEOMETRIC, CandidateSet
from shaperank.metrics import mscd
from shaperank.pipeline import RetrievalResult
from shaperank.pointcloud import Database, PointCloud


def cs(ids, kind=FEATURE):
    return CandidateSet(tuple((m, float(i)) for i, m in enumerate(ids)), kind)


def result(qid, initial, final=None):
    return RetrievalResult(qid, cs(initial), cs(final or initial, GEOMETRIC))


@pytest.fixture
def db():
    models = {
        "a": PointCloud([[0.0, 0, 0]], "a"),
        "b": PointCloud([[0.25, 0, 0]], "b"),
        "c": PointCloud([[0.5, 0, 0], [1.0, 0, 0]], "c"),
        "d": PointCloud([[0.0, 1, 0]], "d"),
        "e": PointCloud([[0.0, 0, 1]], "e"),
        "f": PointCloud([[1.0, 1, 1]], "f"),
        "g": PointCloud([[2.0, 1, 1]], "g"),
    }
    cats = {"a": "x", "b": "x", "c": "x", "d": "y", "e": "y", "f": "x", "g": "y"}
    return Database(models, cats)


IDS = list("abcdefg")


def test_perfect_retrieval():
    gt = GroundTruth({"q1": "a", "q2": "c"})
    res = [result("q1", ["a", "b"]), result("q2", ["c", "a"])]
    for k in (1, 2, 10):
        assert topk_accuracy(res, gt, k) == 1.0


def test_topk_half():
    gt = GroundTruth({"q1": "a", "q2": "g"})
    res = [result("q1", IDS), result("q2", IDS)]  # ranks 1 and 7
    assert topk_accuracy(res, gt, 5) == 0.5
    assert topk_accuracy(res, gt, 7) == 1.0


def test_topk_initial_vs_final():
    gt = GroundTruth({"q": "b"})
    res = [result("q", ["a", "b"], ["b", "a"])]
    assert topk_accuracy(res, gt, 1, use_final=False) == 0.0
    assert topk_accuracy(res, gt, 1, use_final=True) == 1.0


def test_missing_ground_truth():
    with pytest.raises(MissingGroundTruth):
        topk_accuracy([result("q", ["a"])], GroundTruth({}), 1)


def test_top1_chamfer(db):
    gt = GroundTruth({"q1": "a", "q2": "a", "q3": "a"})
    exact = [result("q1", ["a"])]
    assert top1_chamfer(exact, gt, db) == 0.0
    # retrieved b is the source set, ground truth a the target
    assert top1_chamfer([result("q1", ["b"])], gt, db) == 0.25
    assert top1_chamfer([result("q1", ["c"])], gt, db) == pytest.approx(0.75)
    assert mscd(db.cloud("a"), db.cloud("c")) == 0.5  # the other direction differs
    two = [result("q1", ["b"]), result("q2", ["c"])]
    assert top1_chamfer(two, gt, db) == pytest.approx(0.5)


def test_top1_chamfer_unknown_model(db):
    with pytest.raises(UnknownModelId):
        top1_chamfer([result("q", ["zzz"])], GroundTruth({"q": "a"}), db)


def test_gt_ranking():
    gt = GroundTruth({"q1": "a", "q2": "c", "q3": "g"})
    res = [result("q1", IDS), result("q2", IDS), result("q3", IDS)]
    assert gt_ranking([res[0]], gt).mean == 1.0
    r = gt_ranking(res, gt)
    assert r.mean == pytest.approx((1 + 3 + 7) / 3)
    res[2] = result("q3", IDS[:3])
    r = gt_ranking(res, gt)
    assert (r.mean, r.counted, r.excluded) == (2.0, 2, 1)


def test_gt_ranking_all_excluded():
    r = gt_ranking([result("q", ["b"])], GroundTruth({"q": "a"}))
    assert math.isnan(r.mean) and r.excluded == 1


def test_gt_ranking_consistent_with_accuracy():
    rng = np.random.default_rng(4)
    gt = GroundTruth({f"q{i}": IDS[rng.integers(7)] for i in range(40)})
    res = [result(q, list(rng.permutation(IDS)[:5])) for q in gt.models]
    ranks = [x.final.rank_of(gt.models[x.query_id]) for x in res]
    for k in range(1, 6):
        assert topk_accuracy(res, gt, k) == sum(1 for r in ranks if r and r <= k) / len(res)


def test_category_ratio(db):
    gt = GroundTruth({"q": "a"})
    assert category_ratio([result("q", ["a", "b", "c", "f"])], db, gt) == 1.0
    assert category_ratio([result("q", ["a", "d", "b", "e", "c"])], db, gt, k=5) == 0.6
    assert category_ratio([result("q", ["a", "d"])], db, gt, k=1) == 1.0


def test_category_ratio_invariant_to_rerank_within_one_class(db):
    gt = GroundTruth({"q": "a"})
    r = [result("q", ["a", "b", "c", "f"], ["f", "c", "b", "a"])]
    assert category_ratio(r, db, gt, use_final=True) == category_ratio(r, db, gt, use_final=False)


def test_category_ratio_missing_label():
    db = Database({"a": PointCloud([[0, 0, 0]], "a")}, {"a": "x"})
    with pytest.raises(MissingCategory):
        category_ratio([result("q", ["a", "zzz"])], db, GroundTruth({"q": "a"}))


def test_class_and_instance_averages():
    a = class_and_instance_averages({"q1": 0.5, "q2": 1.0}, {"q1": "x", "q2": "x"})
    assert a.class_avg == a.instance_avg == 0.75
    per = {"a0": 1.0}
    cats = {"a0": "A"}
    for i in range(99):
        per[f"b{i}"] = 0.0
        cats[f"b{i}"] = "B"
    a = class_and_instance_averages(per, cats)
    assert a.class_avg == 0.5
    assert a.instance_avg == pytest.approx(0.01, abs=1e-15)
    with pytest.raises(ValueError):
        class_and_instance_averages({}, {})
    with pytest.raises(MissingCategory):
        class_and_instance_averages({"q": 1.0}, {})


def test_ground_truth_validate(db):
    GroundTruth({"q": "a"}).validate(db)
    with pytest.raises(UnknownModelId):
        GroundTruth({"q": "nope"}).validate(db)


def test_evaluate_report(db):
    gt = GroundTruth({"q1": "a", "q2": "d"}, {"q1": "x", "q2": "y"})
    res = [result("q1", ["b", "a", "c"], ["a", "b", "c"]), result("q2", ["a", "b", "c"])]
    rep = evaluate(res, gt, db, ks=(1, 2))
    assert rep.queries == 2
    assert rep["initial.ra@1.instance_avg"] == 0.0
    assert rep["final.ra@1.instance_avg"] == 0.5
    assert rep["final.ra@1.class.x"] == 1.0
    assert rep["final.ra@1.class.y"] == 0.0
    assert rep["final.gt_excluded"] == 1
    assert rep["initial.gt_ranking.instance_avg"] == 2.0
    assert rep["final.gt_ranking.instance_avg"] == 1.0
    text = rep.to_text()
    lines = text.splitlines()[1:]
    assert lines == sorted(lines, key=lambda s: s.split()[0])
    assert "final.ra@1.instance_avg 0.5000" in lines
    assert "queries 2" in lines
    assert evaluate(res, gt, db, ks=(1, 2)).to_text() == text
    assert '"metric": "mscd"' in rep.to_json()


def test_report_json_handles_nan():
    rep = EvalReport({"x": float("nan"), "queries": 1})
    assert '"x": null' in rep.to_json()
