"""Exact k-nearest-neighbour search over database feature vectors, with persistence.

Results are ordered by (feature distance, model id). Low-dimensional feature
sets are searched with a kd-tree; above ``KDTREE_MAX_DIM`` dimensions pruning
stops paying off and a dense linear scan is used instead. Both paths report
distances computed by :func:`shaperank.descriptor.row_distances`, so answers
are bitwise identical to a plain linear scan.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .descriptor import FeatureSet, row_distances
from .errors import CorruptFile, DimensionMismatch, VersionMismatch

KDTREE_MAX_DIM = 32
FEATURE = "feature-distance"
GEOMETRIC = "geometric-distance"

MAGIC = b"SRNK"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")  # magic, version, dim, count


@dataclass(frozen=True)
class CandidateSet:
    """Ordered ``(model id, score)`` pairs, ascending by score then id."""

    entries: tuple[tuple[str, float], ...]
    kind: str = FEATURE

    @classmethod
    def from_scores(cls, scores, kind: str) -> "CandidateSet":
        """Sort ``(id, score)`` pairs into canonical order."""
        ordered = sorted(((str(i), float(s)) for i, s in scores), key=lambda e: (e[1], e[0]))
        return cls(tuple(ordered), kind)

    @property
    def ids(self) -> list[str]:
        return [e[0] for e in self.entries]

    @property
    def scores(self) -> list[float]:
        return [e[1] for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def rank_of(self, model_id: str) -> int | None:
        """1-based position of ``model_id`` or None if absent."""
        for pos, (mid, _) in enumerate(self.entries, 1):
            if mid == model_id:
                return pos
        return None

    def top(self, k: int) -> "CandidateSet":
        return CandidateSet(self.entries[:k], self.kind)


class FeatureIndex:
    """Immutable exact kNN index over a :class:`FeatureSet`.

    Rows are stored in ascending id order, so the row number doubles as the
    tie-break key for equal distances.
    """

    def __init__(self, ids, matrix: np.ndarray):
        ids = [str(i) for i in ids]
        order = sorted(range(len(ids)), key=lambda r: ids[r])
        if len(set(ids)) != len(ids):
            raise ValueError("feature index ids must be unique")
        if len(ids) == 0:
            raise ValueError("feature index needs at least one entry")
        matrix = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64)[order])
        if matrix.ndim != 2 or matrix.shape[0] != len(ids) or matrix.shape[1] < 1:
            raise ValueError(f"bad feature matrix shape {matrix.shape}")
        matrix.setflags(write=False)
        self._ids = tuple(ids[r] for r in order)
        self._matrix = matrix
        self._tree = None
        if self.dim <= KDTREE_MAX_DIM:
            self._tree = cKDTree(matrix, leafsize=16, balanced_tree=True, copy_data=False)

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    @property
    def size(self) -> int:
        return self._matrix.shape[0]

    @property
    def uses_kdtree(self) -> bool:
        return self._tree is not None

    def __len__(self) -> int:
        return self.size

    def query(self, query, k: int) -> CandidateSet:
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        if q.size != self.dim:
            raise DimensionMismatch(f"query dimension {q.size} != index dimension {self.dim}")
        if k < 1:
            raise ValueError("k must be >= 1")
        k = min(k, self.size)
        if self._tree is None or k == self.size:
            rows = np.arange(self.size)
        else:
            rows = self._tree_candidates(q, k)
        dist = row_distances(self._matrix[rows], q)
        order = np.lexsort((rows, dist))[:k]
        entries = tuple((self._ids[rows[o]], float(dist[o])) for o in order)
        return CandidateSet(entries, FEATURE)

    def _tree_candidates(self, q: np.ndarray, k: int) -> np.ndarray:
        # The tree's own distance arithmetic can differ from row_distances in
        # the last ulp, and its tie order is arbitrary. Collect every row inside
        # a slightly widened k-th radius and let the caller re-sort exactly.
        d, _ = self._tree.query(q, k=k)
        radius = float(np.atleast_1d(d)[-1])
        radius = radius * (1.0 + 1e-9) + 1e-300
        rows = self._tree.query_ball_point(q, radius, p=2.0, eps=0.0)
        return np.asarray(sorted(rows), dtype=np.int64)


def build_feature_index(features: FeatureSet) -> FeatureIndex:
    if len(features) == 0:
        raise ValueError("cannot index an empty feature set")
    ids = features.ids()
    return FeatureIndex(ids, features.matrix(ids))


def knn(index: FeatureIndex, query, k: int) -> CandidateSet:
    """The ``min(k, S)`` nearest database entries, ascending by (distance, id)."""
    return index.query(query, k)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _serialize(index: FeatureIndex) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, index.dim, index.size)]
    parts.append(index.matrix.astype("<f8").tobytes(order="C"))
    for mid in index.ids:
        raw = mid.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_index(index: FeatureIndex, path) -> None:
    """Write the index as ``SRNK`` binary: header, float64 payload, ids, CRC32."""
    Path(path).write_bytes(_serialize(index))


def load_index(path) -> FeatureIndex:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 4:
        raise CorruptFile(f"{path}: file too short ({len(data)} bytes)")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptFile(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptFile(f"{path}: checksum mismatch")
    offset = _HEADER.size
    nbytes = 8 * dim * count
    if offset + nbytes > len(body):
        raise CorruptFile(f"{path}: payload truncated")
    matrix = np.frombuffer(body, dtype="<f8", count=dim * count, offset=offset).reshape(count, dim)
    offset += nbytes
    ids = []
    for _ in range(count):
        if offset + 4 > len(body):
            raise CorruptFile(f"{path}: id table truncated")
        (n,) = struct.unpack_from("<I", body, offset)
        offset += 4
        if offset + n > len(body):
            raise CorruptFile(f"{path}: id table truncated")
        ids.append(body[offset:offset + n].decode("utf-8"))
        offset += n
    if offset != len(body):
        raise CorruptFile(f"{path}: {len(body) - offset} trailing bytes")
    return FeatureIndex(ids, matrix.astype(np.float64))
