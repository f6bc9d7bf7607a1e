"""Point cloud container, file readers/writers, normalization and resampling."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    DegenerateCloud,
    DuplicateId,
    EmptyCloud,
    MissingCategory,
    NonFiniteCoordinate,
    ParseError,
    UnknownModelId,
)

DEFAULT_RESOLUTION = 2048
DEFAULT_MIN_POINTS = 64
FORMATS = ("xyz-text", "ply-ascii")


def _as_points(points) -> np.ndarray:
    arr = np.array(points, dtype=np.float64, copy=True)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (N, 3), got {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyCloud("point cloud has no points")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteCoordinate("point cloud contains NaN or Inf coordinates")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An immutable (N, 3) float64 point set with an identifier.

    The coordinate array is validated on construction (non-empty, finite) and
    made read-only, so instances can be shared freely between threads.
    """

    points: np.ndarray
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"PointCloud(id={self.id!r}, n={len(self)})"

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.id)


class Database:
    """Map of model id to (normalized) CAD point cloud plus category labels.

    Spatial indices over the model clouds are built lazily on first use and
    cached per model id; see :meth:`spatial_index`.
    """

    def __init__(self, models: Mapping[str, PointCloud], categories: Mapping[str, str]):
        if len(models) == 0:
            raise ValueError("database must contain at least one model")
        for mid, cloud in models.items():
            if not isinstance(cloud, PointCloud):
                raise TypeError(f"model {mid!r} is not a PointCloud")
            if mid not in categories:
                raise MissingCategory(f"model {mid!r} has no category label")
        self._models = MappingProxyType(dict(sorted(models.items())))
        self._categories = MappingProxyType({k: categories[k] for k in self._models})
        self._index_cache: dict = {}
        self._lock = threading.Lock()

    @classmethod
    def from_clouds(cls, clouds, categories: Mapping[str, str]) -> "Database":
        models = {}
        for c in clouds:
            if c.id in models:
                raise DuplicateId(f"duplicate model id {c.id!r}")
            models[c.id] = c
        return cls(models, categories)

    @property
    def models(self) -> Mapping[str, PointCloud]:
        return self._models

    @property
    def categories(self) -> Mapping[str, str]:
        return self._categories

    @property
    def size(self) -> int:
        return len(self._models)

    def __len__(self) -> int:
        return len(self._models)

    def __contains__(self, model_id) -> bool:
        return model_id in self._models

    def cloud(self, model_id: str) -> PointCloud:
        try:
            return self._models[model_id]
        except KeyError:
            raise UnknownModelId(f"unknown model id {model_id!r}") from None

    def category(self, model_id: str) -> str:
        try:
            return self._categories[model_id]
        except KeyError:
            raise UnknownModelId(f"unknown model id {model_id!r}") from None

    def spatial_index(self, model_id: str):
        """Cached exact 3D nearest-neighbour index over one model cloud."""
        index = self._index_cache.get(model_id)
        if index is not None:
            return index
        from .metrics import build_spatial_index

        built = build_spatial_index(self.cloud(model_id))
        with self._lock:
            # first writer wins so every caller sees the same object
            return self._index_cache.setdefault(model_id, built)

    def cached_index_count(self) -> int:
        return len(self._index_cache)

    def clear_index_cache(self) -> None:
        with self._lock:
            self._index_cache.clear()


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def _parse_float_row(tokens, where):
    try:
        row = [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"{where}: cannot parse coordinates {' '.join(tokens)!r}") from None
    if not all(np.isfinite(row)):
        raise NonFiniteCoordinate(f"{where}: non-finite coordinate")
    return row


def _read_xyz(path: Path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            tokens = s.split()
            if len(tokens) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 values, got {len(tokens)}")
            rows.append(_parse_float_row(tokens, f"{path}:{lineno}"))
    return rows


def _read_ply_ascii(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}:1: missing 'ply' magic")
    elements = []  # [name, count, [property names]]
    fmt_ok = False
    pos = 1
    while True:
        if pos >= len(lines):
            raise ParseError(f"{path}: header not terminated by end_header")
        tokens = lines[pos].split()
        pos += 1
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "end_header":
            break
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise ParseError(f"{path}:{pos}: only ASCII PLY is supported")
            fmt_ok = True
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError(f"{path}:{pos}: malformed element line")
            try:
                count = int(tokens[2])
            except ValueError:
                raise ParseError(f"{path}:{pos}: bad element count {tokens[2]!r}") from None
            elements.append([tokens[1], count, []])
        elif tokens[0] == "property":
            if not elements:
                raise ParseError(f"{path}:{pos}: property before any element")
            elements[-1][2].append(tokens[-1] if tokens[1] != "list" else None)
        else:
            raise ParseError(f"{path}:{pos}: unexpected header line {lines[pos - 1]!r}")
    if not fmt_ok:
        raise ParseError(f"{path}: missing format line")

    rows = []
    for name, count, props in elements:
        if name != "vertex":
            pos += count
            continue
        try:
            cols = [props.index(axis) for axis in ("x", "y", "z")]
        except ValueError:
            raise ParseError(f"{path}: vertex element lacks x/y/z properties") from None
        for _ in range(count):
            if pos >= len(lines):
                raise ParseError(f"{path}: file ends inside vertex data")
            tokens = lines[pos].split()
            pos += 1
            if len(tokens) < len(props):
                raise ParseError(f"{path}:{pos}: expected {len(props)} values")
            rows.append(_parse_float_row([tokens[c] for c in cols], f"{path}:{pos}"))
        break
    return rows


def load_point_cloud(path, format: str | None = None) -> PointCloud:
    """Read a point cloud from an xyz-text or ASCII PLY file.

    ``format`` defaults to ``ply-ascii`` for ``.ply`` files and ``xyz-text``
    otherwise. The cloud id is the file stem and points keep file order.
    """
    path = Path(path)
    if format is None:
        format = "ply-ascii" if path.suffix.lower() == ".ply" else "xyz-text"
    if format == "xyz-text":
        rows = _read_xyz(path)
    elif format == "ply-ascii":
        rows = _read_ply_ascii(path)
    else:
        raise ValueError(f"unknown point cloud format {format!r}; expected one of {FORMATS}")
    if not rows:
        raise EmptyCloud(f"{path}: no points")
    return PointCloud(np.asarray(rows, dtype=np.float64), path.stem)


def save_xyz(cloud: PointCloud, path) -> None:
    """Write ``cloud`` as xyz-text with round-trip exact (17 significant digit) values."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        np.savetxt(fh, cloud.points, fmt="%.17g")


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def normalization_transform(cloud: PointCloud) -> tuple[np.ndarray, float]:
    """Return ``(centroid, scale)`` such that ``(p - centroid) / scale`` is normalized."""
    pts = cloud.points
    centroid = pts.mean(axis=0)
    radius = float(np.sqrt(((pts - centroid) ** 2).sum(axis=1)).max())
    # relative threshold so that tiny but genuine clouds still normalize
    if radius <= 1e-12 * max(1.0, float(np.abs(centroid).max())):
        raise DegenerateCloud(f"cloud {cloud.id!r}: all points coincide, scale undefined")
    return centroid, radius


def apply_transform(cloud: PointCloud, centroid: np.ndarray, scale: float) -> PointCloud:
    return cloud.with_points((cloud.points - centroid) / scale)


def normalize(cloud: PointCloud) -> PointCloud:
    """Center on the centroid and scale so the farthest point has norm 1."""
    centroid, scale = normalization_transform(cloud)
    return apply_transform(cloud, centroid, scale)


def downsample(cloud: PointCloud, target: int = DEFAULT_RESOLUTION, seed: int = 0) -> PointCloud:
    """Uniform random subset of exactly ``target`` points (no-op if already small enough).

    Selected points keep their original relative order.
    """
    if target < 1:
        raise ValueError("target must be >= 1")
    n = len(cloud)
    if n <= target:
        return cloud
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=target, replace=False))
    return cloud.with_points(cloud.points[keep])
