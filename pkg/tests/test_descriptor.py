import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from shaperank.descriptor import (
    BUILTIN_SOURCE,
    FeatureSet,
    compute_d2,
    feature_distance,
    load_features,
    row_distances,
    save_features,
)
from shaperank.errors import DimensionMismatch, DuplicateId, ParseError, TooFewPoints
from shaperank.pointcloud import PointCloud

from conftest import ball_points


def test_d2_two_points_top_bin():
    c = PointCloud([[-1, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal(compute_d2(c, bins=4, pairs=16), [0, 0, 0, 1])


def test_d2_bin_edges():
    # distances 0.5 and 1.5 on [0, 2] with 4 bins fall in bins 1 and 3
    c = PointCloud([[0, 0, 0], [0.5, 0, 0]])
    assert compute_d2(c, bins=4, pairs=8)[1] == 1.0
    c = PointCloud([[0, 0, 0], [1.5, 0, 0]])
    assert compute_d2(c, bins=4, pairs=8)[3] == 1.0


def test_d2_far_pairs_clip_into_last_bin():
    c = PointCloud([[0, 0, 0], [7, 0, 0]])
    assert compute_d2(c, bins=8, pairs=4)[-1] == 1.0


def test_d2_deterministic(cloud_factory):
    c = cloud_factory(300)
    a = compute_d2(c, seed=5)
    b = compute_d2(PointCloud(c.points.copy()), seed=5)
    assert a.tobytes() == b.tobytes()
    assert a.shape == (64,)


def test_d2_needs_two_points():
    with pytest.raises(TooFewPoints):
        compute_d2(PointCloud([[0, 0, 0]]))


def test_d2_rejects_bad_params(cloud_factory):
    with pytest.raises(ValueError):
        compute_d2(cloud_factory(5), bins=1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 200), st.integers(2, 80), st.integers(1, 500))
def test_d2_sums_to_one(seed, n, bins, pairs):
    c = PointCloud(ball_points(np.random.default_rng(seed), n))
    assert math.isclose(compute_d2(c, bins, pairs, seed).sum(), 1.0, abs_tol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_d2_rotation_invariant(seed):
    r = np.random.default_rng(seed)
    # avoid pair distances sitting on a bin edge, where rounding could flip bins
    c = PointCloud(ball_points(r, 100))
    rot = Rotation.random(random_state=seed).as_matrix()
    a = compute_d2(c, seed=seed)
    b = compute_d2(PointCloud(c.points @ rot.T), seed=seed)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_feature_distance_values():
    assert feature_distance([0.0, 0.0], [3.0, 4.0]) == 5.0
    v = np.arange(5.0)
    assert feature_distance(v, v) == 0.0
    with pytest.raises(DimensionMismatch):
        feature_distance([1.0, 2.0], [1.0])


vec = arrays(np.float64, 6, elements=st.floats(-1e3, 1e3, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(vec, vec, vec)
def test_feature_distance_metric_axioms(a, b, c):
    ab = feature_distance(a, b)
    assert ab >= 0
    assert ab == feature_distance(b, a)
    assert feature_distance(a, a) == 0
    assert feature_distance(a, c) <= ab + feature_distance(b, c) + 1e-9 * (1 + ab)


def test_row_distances_batch_independent(rng):
    m = rng.standard_normal((500, 64))
    q = rng.standard_normal(64)
    full = row_distances(m, q)
    for i in range(0, 500, 37):
        assert full[i] == feature_distance(m[i], q)
        assert full[i] == row_distances(m[i:i + 3], q)[0]
    np.testing.assert_allclose(full, [math.dist(r, q) for r in m], rtol=1e-13)


def _write(path, rows):
    path.write_text("".join(f"{fid} {' '.join(map(str, v))}\n" for fid, v in rows))


def test_load_features_ok(tmp_path, rng):
    f = tmp_path / "dgcnn.txt"
    _write(f, [(f"m{i}", rng.standard_normal(256)) for i in range(3)])
    fs = load_features(f)
    assert len(fs) == 3 and fs.dim == 256
    assert fs.source == "external:dgcnn"


def test_load_features_dimension_mismatch(tmp_path):
    f = tmp_path / "f.txt"
    _write(f, [("a", [0.0] * 256), ("b", [0.0] * 256), ("c", [0.0] * 128)])
    with pytest.raises(DimensionMismatch):
        load_features(f)


def test_load_features_expected_dim(tmp_path):
    f = tmp_path / "f.txt"
    _write(f, [("a", [0.0] * 4)])
    with pytest.raises(DimensionMismatch):
        load_features(f, expected_dim=8)


def test_load_features_duplicate(tmp_path):
    f = tmp_path / "f.txt"
    _write(f, [("chair_001", [1.0]), ("chair_001", [2.0])])
    with pytest.raises(DuplicateId):
        load_features(f)


@pytest.mark.parametrize("text", ["a 1 x\n", "a\n", "", "# only comment\n", "a 1 inf\n"])
def test_load_features_parse_errors(tmp_path, text):
    f = tmp_path / "f.txt"
    f.write_text(text)
    with pytest.raises(ParseError):
        load_features(f)


def test_features_round_trip(tmp_path, rng):
    fs = FeatureSet.from_dict({f"m{i}": rng.standard_normal(9) for i in range(7)})
    save_features(fs, tmp_path / "f.txt")
    back = load_features(tmp_path / "f.txt", source=BUILTIN_SOURCE)
    assert back.ids() == fs.ids()
    for fid in fs.ids():
        assert back[fid].tobytes() == fs[fid].tobytes()
