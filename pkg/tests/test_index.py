import numpy as np
import pytest

from shaperank.descriptor import FeatureSet, row_distances
from shaperank.errors import CorruptFile, DimensionMismatch, VersionMismatch
from shaperank.index import (
    FEATURE,
    CandidateSet,
    FeatureIndex,
    build_feature_index,
    knn,
    load_index,
    save_index,
)


def linear_topk(ids, matrix, q, k):
    """Exhaustive (distance, id) sort."""
    d = row_distances(matrix, q)
    pairs = sorted(zip(d.tolist(), ids))
    return [(i, s) for s, i in pairs[:k]]


def test_hand_example():
    idx = build_feature_index(FeatureSet.from_dict({"a": [0.0], "b": [1.0], "c": [3.0]}))
    got = knn(idx, np.array([0.9]), 2)
    assert got.ids == ["b", "a"]
    assert got.scores == pytest.approx([0.1, 0.9], abs=1e-15)
    assert got.kind == FEATURE


def test_exact_match_first():
    fs = FeatureSet.from_dict({"x": [1.0, 2.0], "y": [5.0, 5.0]})
    got = knn(build_feature_index(fs), np.array([1.0, 2.0]), 1)
    assert got.entries == (("x", 0.0),)


def test_single_entry_index():
    idx = build_feature_index(FeatureSet.from_dict({"only": [1.0, 1.0, 1.0]}))
    for q in ([0, 0, 0], [9, 9, 9]):
        assert knn(idx, np.array(q, float), 5).ids == ["only"]


def test_k_larger_than_s_returns_all_sorted(rng):
    fs = FeatureSet.from_dict({f"m{i}": rng.standard_normal(4) for i in range(12)})
    got = knn(build_feature_index(fs), rng.standard_normal(4), 100)
    assert len(got) == 12
    assert got.scores == sorted(got.scores)


def test_dimension_mismatch():
    idx = build_feature_index(FeatureSet.from_dict({"a": [0.0, 1.0]}))
    with pytest.raises(DimensionMismatch):
        knn(idx, np.zeros(3), 1)


def test_ties_broken_by_id():
    fs = FeatureSet.from_dict({"d": [1.0], "b": [1.0], "c": [-1.0], "a": [5.0]})
    got = knn(build_feature_index(fs), np.array([0.0]), 3)
    assert got.ids == ["b", "c", "d"]


@pytest.mark.parametrize("dim", [3, 8, 64])
def test_matches_linear_scan(rng, dim):
    ids = [f"id{i:04d}" for i in range(1000)]
    mat = rng.standard_normal((1000, dim))
    idx = FeatureIndex(ids, mat)
    assert idx.uses_kdtree == (dim <= 32)
    for _ in range(100):
        q = rng.standard_normal(dim)
        assert knn(idx, q, 10).entries == tuple(linear_topk(ids, mat, q, 10))


@pytest.mark.parametrize("dim", [2, 40])
def test_matches_linear_scan_with_many_ties(rng, dim):
    ids = [f"{i:03d}" for i in rng.permutation(400)]
    mat = rng.integers(0, 3, size=(400, dim)).astype(float)
    idx = FeatureIndex(ids, mat)
    for k in (1, 3, 17, 400):
        q = rng.integers(0, 3, size=dim).astype(float)
        assert knn(idx, q, k).entries == tuple(linear_topk(ids, mat, q, k))


def test_prefix_nesting(rng):
    ids = [f"m{i}" for i in range(300)]
    idx = FeatureIndex(ids, rng.integers(0, 4, size=(300, 5)).astype(float))
    q = np.ones(5)
    prev = knn(idx, q, 1).entries
    for k in range(2, 40):
        cur = knn(idx, q, k).entries
        assert cur[: k - 1] == prev
        prev = cur


def test_build_deterministic(rng):
    fs = FeatureSet.from_dict({f"m{i}": rng.standard_normal(6) for i in range(200)})
    a, b = build_feature_index(fs), build_feature_index(fs)
    for _ in range(20):
        q = rng.standard_normal(6)
        assert knn(a, q, 7) == knn(b, q, 7)


def test_candidate_set_helpers():
    cs = CandidateSet.from_scores([("b", 1.0), ("a", 1.0), ("c", 0.5)], FEATURE)
    assert cs.ids == ["c", "a", "b"]
    assert cs.rank_of("a") == 2
    assert cs.rank_of("zz") is None
    assert cs.top(1).ids == ["c"]


@pytest.mark.parametrize("dim", [8, 256])
def test_round_trip(tmp_path, rng, dim):
    ids = [f"model/{i}" for i in range(150)]
    idx = FeatureIndex(ids, rng.standard_normal((150, dim)))
    path = tmp_path / "i.srnk"
    save_index(idx, path)
    back = load_index(path)
    assert back.ids == idx.ids
    for _ in range(50):
        q = rng.standard_normal(dim)
        assert knn(back, q, 9) == knn(idx, q, 9)


def test_save_is_byte_stable(tmp_path, rng):
    fs = FeatureSet.from_dict({f"m{i}": rng.standard_normal(5) for i in range(20)})
    save_index(build_feature_index(fs), tmp_path / "a")
    save_index(build_feature_index(fs), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert (tmp_path / "a").read_bytes()[:4] == b"SRNK"


@pytest.fixture
def saved(tmp_path, rng):
    path = tmp_path / "i.srnk"
    save_index(FeatureIndex([f"m{i}" for i in range(30)], rng.standard_normal((30, 4))), path)
    return path


@pytest.mark.parametrize("cut", [1, 10, 100, -1])
def test_truncated_rejected(saved, cut):
    data = saved.read_bytes()
    saved.write_bytes(data[:cut])
    with pytest.raises(CorruptFile):
        load_index(saved)


def test_flipped_byte_rejected(saved):
    data = bytearray(saved.read_bytes())
    data[40] ^= 0x01
    saved.write_bytes(bytes(data))
    with pytest.raises(CorruptFile):
        load_index(saved)


def test_bad_magic_rejected(saved):
    data = saved.read_bytes()
    saved.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CorruptFile):
        load_index(saved)


def test_version_bump_rejected(saved):
    data = bytearray(saved.read_bytes())
    data[4] += 1
    saved.write_bytes(bytes(data))
    with pytest.raises(VersionMismatch):
        load_index(saved)
