"""Global shape descriptors: the built-in D2 shape distribution and external feature files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, DuplicateId, NonFiniteCoordinate, ParseError, TooFewPoints
from .pointcloud import PointCloud

D2_BINS = 64
D2_PAIRS = 4096
D2_RANGE = 2.0  # largest pair distance inside a unit-radius cloud
BUILTIN_SOURCE = "builtin-d2"


def compute_d2(cloud: PointCloud, bins: int = D2_BINS, pairs: int = D2_PAIRS, seed: int = 0) -> np.ndarray:
    """D2 shape distribution: histogram of distances between random point pairs.

    Pairs are drawn as point *indices* (two distinct points per pair) from a
    generator seeded with ``seed``, so the descriptor is reproducible and
    invariant to rigid motions of the cloud. Distances are binned uniformly on
    ``[0, 2]``; a distance of exactly 2 (or more, for clouds that are not
    unit-radius) lands in the last bin. The histogram is L1-normalized.
    """
    n = len(cloud)
    if n < 2:
        raise TooFewPoints(f"cloud {cloud.id!r}: D2 needs at least 2 points, got {n}")
    if bins < 2 or pairs < 1:
        raise ValueError("bins must be >= 2 and pairs >= 1")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=pairs)
    j = (i + rng.integers(1, n, size=pairs)) % n
    diff = cloud.points[i] - cloud.points[j]
    dist = np.sqrt((diff * diff).sum(axis=1))
    which = np.minimum((dist * (bins / D2_RANGE)).astype(np.int64), bins - 1)
    hist = np.bincount(which, minlength=bins).astype(np.float64)
    return hist / pairs


def row_distances(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Euclidean distance from ``query`` to every row of ``matrix``.

    Each row is reduced independently, so a row's result does not depend on
    which other rows are in the batch. Feature distances everywhere in the
    package go through this function to keep them bit-for-bit comparable.
    """
    diff = matrix - query
    return np.sqrt(np.add.reduce(diff * diff, axis=1))


def feature_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"feature shapes differ: {a.shape} vs {b.shape}")
    return float(row_distances(a[None, :], b)[0])


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Id-keyed feature vectors of one common dimension."""

    features: Mapping[str, np.ndarray]
    dim: int
    source: str = BUILTIN_SOURCE

    @classmethod
    def from_dict(cls, features: Mapping[str, np.ndarray], source: str = BUILTIN_SOURCE) -> "FeatureSet":
        if not features:
            raise ValueError("feature set is empty")
        frozen = {}
        dim = None
        for fid, vec in features.items():
            v = np.array(vec, dtype=np.float64).reshape(-1)
            if dim is None:
                dim = v.size
            if v.size != dim:
                raise DimensionMismatch(f"feature {fid!r} has dimension {v.size}, expected {dim}")
            if not np.all(np.isfinite(v)):
                raise NonFiniteCoordinate(f"feature {fid!r} has non-finite entries")
            v.setflags(write=False)
            frozen[fid] = v
        if dim < 1:
            raise DimensionMismatch("feature dimension must be >= 1")
        return cls(MappingProxyType(frozen), dim, source)

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, fid: str) -> np.ndarray:
        return self.features[fid]

    def __contains__(self, fid) -> bool:
        return fid in self.features

    def ids(self) -> list[str]:
        return sorted(self.features)

    def matrix(self, ids=None) -> np.ndarray:
        ids = self.ids() if ids is None else ids
        return np.vstack([self.features[i] for i in ids])


def compute_feature_set(clouds, bins: int = D2_BINS, pairs: int = D2_PAIRS, seed: int = 0) -> FeatureSet:
    return FeatureSet.from_dict({c.id: compute_d2(c, bins, pairs, seed) for c in clouds}, BUILTIN_SOURCE)


def load_features(path, expected_dim: int | None = None, source: str | None = None) -> FeatureSet:
    """Read a whitespace feature file with one ``<id> <v1> ... <vd>`` record per line."""
    path = Path(path)
    feats: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            tokens = s.split()
            fid, values = tokens[0], tokens[1:]
            if not values:
                raise ParseError(f"{path}:{lineno}: record {fid!r} has no values")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric feature value") from None
            if not np.all(np.isfinite(vec)):
                raise ParseError(f"{path}:{lineno}: non-finite feature value")
            if dim is None:
                dim = vec.size
                if expected_dim is not None and dim != expected_dim:
                    raise DimensionMismatch(f"{path}:{lineno}: dimension {dim}, expected {expected_dim}")
            elif vec.size != dim:
                raise DimensionMismatch(f"{path}:{lineno}: dimension {vec.size}, expected {dim}")
            if fid in feats:
                raise DuplicateId(f"{path}:{lineno}: duplicate id {fid!r}")
            feats[fid] = vec
    if not feats:
        raise ParseError(f"{path}: no feature records")
    return FeatureSet.from_dict(feats, source or f"external:{path.stem}")


def save_features(features: FeatureSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# source={features.source} dim={features.dim}\n")
        for fid in features.ids():
            fh.write(fid + " " + " ".join(format(float(v), ".17g") for v in features[fid]) + "\n")
