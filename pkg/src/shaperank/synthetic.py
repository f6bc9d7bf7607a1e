"""Procedural CAD-like shape databases with partial, noisy query scans.

Four shape families (box, cylinder, ellipsoid, L-shaped block) each yield a
class; instances within a class differ by per-axis dimension jitter. Models
are surface-sampled and normalized. A query is a fresh surface sample of one
model, expressed in that model's normalized frame (i.e. already aligned),
cropped by a random half-space, perturbed with Gaussian noise and mixed
with uniformly distributed outlier points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec
from .pointcloud import Database, PointCloud, apply_transform, normalization_transform

FAMILIES = ("box", "cylinder", "ellipsoid", "lshape")
MAX_OUTLIER_FRACTION = 0.2


@dataclass(frozen=True)
class SyntheticSpec:
    models: int = 200
    classes: int = 4
    queries: int = 50
    points: int = 2048
    crop: float = 0.3
    noise: float = 0.01
    outlier_frac: float = 0.0
    outlier_extent: float = 1.0
    jitter: float = 0.25

    def validate(self) -> None:
        if self.models < 2:
            raise InvalidSpec("models must be >= 2")
        if self.classes < 1 or self.classes > self.models:
            raise InvalidSpec("classes must be between 1 and the model count")
        if self.queries < 0:
            raise InvalidSpec("queries must be >= 0")
        if self.points < 16:
            raise InvalidSpec("points must be >= 16")
        if not 0.0 <= self.crop < 0.9:
            raise InvalidSpec("crop fraction must be in [0, 0.9)")
        if self.noise < 0:
            raise InvalidSpec("noise sigma must be >= 0")
        if not 0.0 <= self.outlier_frac <= MAX_OUTLIER_FRACTION:
            raise InvalidSpec(f"outlier fraction must be in [0, {MAX_OUTLIER_FRACTION}]")
        if self.outlier_extent <= 0:
            raise InvalidSpec("outlier extent must be > 0")
        if not 0.0 <= self.jitter < 1.0:
            raise InvalidSpec("jitter must be in [0, 1)")


@dataclass(frozen=True)
class SyntheticDataset:
    database: Database
    queries: list
    ground_truth: dict
    query_categories: dict


# ---------------------------------------------------------------------------
# surface samplers; each returns exactly n points on the shape surface
# ---------------------------------------------------------------------------


def _sample_box(dims, n, rng, lo=None):
    a, b, c = dims
    lo = np.zeros(3) if lo is None else np.asarray(lo, dtype=np.float64)
    areas = np.array([b * c, b * c, a * c, a * c, a * b, a * b])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.random((n, 3)) * np.array([a, b, c])
    axis = face // 2
    side = face % 2
    uv[np.arange(n), axis] = side * np.array([a, b, c])[axis]
    return uv + lo


def _sample_cylinder(dims, n, rng):
    rx, ry, h = dims[0] / 2, dims[1] / 2, dims[2]
    # elliptic cylinder; lateral area approximated by Ramanujan's perimeter
    perim = np.pi * (3 * (rx + ry) - np.sqrt((3 * rx + ry) * (rx + 3 * ry)))
    cap = np.pi * rx * ry
    areas = np.array([perim * h, cap, cap])
    part = rng.choice(3, size=n, p=areas / areas.sum())
    out = np.empty((n, 3))
    theta = rng.random(n) * 2 * np.pi
    r = np.sqrt(rng.random(n))
    lateral = part == 0
    out[:, 0] = np.where(lateral, np.cos(theta), r * np.cos(theta)) * rx
    out[:, 1] = np.where(lateral, np.sin(theta), r * np.sin(theta)) * ry
    out[:, 2] = np.where(lateral, rng.random(n) * h, np.where(part == 1, 0.0, h))
    return out


def _sample_ellipsoid(dims, n, rng):
    axes = np.asarray(dims, dtype=np.float64) / 2
    out = np.empty((0, 3))
    # rejection on the area element keeps the density close to uniform
    while len(out) < n:
        g = rng.standard_normal((2 * n, 3))
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        weight = np.linalg.norm(u / axes, axis=1)
        accept = rng.random(2 * n) * weight.max() <= weight
        out = np.vstack([out, u[accept] * axes])
    return out[:n]


def _sample_lshape(dims, n, rng):
    a, b, c = dims
    # L profile in the x/z plane: a full-height bar plus a floor slab
    t = 0.35 * a
    s = 0.35 * c
    bar = (t, b, c)
    slab = (a - t, b, s)
    slab_lo = (t, 0.0, 0.0)
    bar_area = 2 * (t * b + t * c + b * c)
    slab_area = 2 * ((a - t) * b + (a - t) * s + b * s)
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * n
        n_bar = rng.binomial(m, bar_area / (bar_area + slab_area))
        p1 = _sample_box(bar, n_bar, rng)
        p2 = _sample_box(slab, m - n_bar, rng, slab_lo)
        # drop the internal face where the two boxes touch
        keep1 = ~((np.abs(p1[:, 0] - t) < 1e-12) & (p1[:, 2] < s))
        keep2 = ~(np.abs(p2[:, 0] - t) < 1e-12)
        pts = np.vstack([p1[keep1], p2[keep2]])
        pts = pts[rng.permutation(len(pts))]
        out = np.vstack([out, pts])
    return out[:n]


_SAMPLERS = {
    "box": _sample_box,
    "cylinder": _sample_cylinder,
    "ellipsoid": _sample_ellipsoid,
    "lshape": _sample_lshape,
}


def sample_surface(family: str, dims, n: int, rng) -> np.ndarray:
    return _SAMPLERS[family](dims, n, rng)


def _half_space_crop(points, fraction, rng):
    if fraction <= 0:
        return points
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    proj = points @ direction
    cut = np.quantile(proj, fraction)
    return points[proj > cut]


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec(), seed: int = 0) -> SyntheticDataset:
    """Build a database, query scans and ground truth from ``spec``; deterministic in ``seed``."""
    spec.validate()
    root = np.random.SeedSequence(seed)
    class_ss, model_ss, query_ss, pick_ss = root.spawn(4)

    class_rng = np.random.default_rng(class_ss)
    class_names = []
    class_dims = []
    for c in range(spec.classes):
        family = FAMILIES[c % len(FAMILIES)]
        name = family if spec.classes <= len(FAMILIES) else f"{family}{c // len(FAMILIES)}"
        class_names.append((name, family))
        class_dims.append(class_rng.uniform(0.5, 1.5, size=3))

    width = max(4, len(str(spec.models - 1)))
    models = {}
    categories = {}
    transforms = {}
    shapes = {}
    for i, ss in enumerate(model_ss.spawn(spec.models)):
        rng = np.random.default_rng(ss)
        c = i % spec.classes
        name, family = class_names[c]
        dims = class_dims[c] * (1.0 + rng.uniform(-spec.jitter, spec.jitter, size=3))
        mid = f"{name}_{i:0{width}d}"
        raw = PointCloud(sample_surface(family, dims, spec.points, rng), mid)
        centroid, scale = normalization_transform(raw)
        models[mid] = apply_transform(raw, centroid, scale)
        categories[mid] = name
        transforms[mid] = (centroid, scale)
        shapes[mid] = (family, dims)
    database = Database(models, categories)

    ids = list(database.models)
    pick = np.random.default_rng(pick_ss)
    if spec.queries <= len(ids):
        sources = pick.choice(len(ids), size=spec.queries, replace=False)
    else:
        sources = pick.choice(len(ids), size=spec.queries, replace=True)

    queries = []
    gt = {}
    qcat = {}
    qwidth = max(4, len(str(max(spec.queries - 1, 0))))
    for q, (src, ss) in enumerate(zip(sources, query_ss.spawn(spec.queries))):
        rng = np.random.default_rng(ss)
        mid = ids[int(src)]
        family, dims = shapes[mid]
        centroid, scale = transforms[mid]
        pts = (sample_surface(family, dims, spec.points, rng) - centroid) / scale
        pts = _half_space_crop(pts, spec.crop, rng)
        if spec.noise > 0:
            pts = pts + rng.normal(0.0, spec.noise, size=pts.shape)
        if spec.outlier_frac > 0:
            n_out = int(round(spec.outlier_frac / (1.0 - spec.outlier_frac) * len(pts)))
            outliers = rng.uniform(-spec.outlier_extent, spec.outlier_extent, size=(n_out, 3))
            pts = np.vstack([pts, outliers])
            pts = pts[rng.permutation(len(pts))]
        qid = f"q{q:0{qwidth}d}"
        queries.append(PointCloud(pts, qid))
        gt[qid] = mid
        qcat[qid] = categories[mid]
    return SyntheticDataset(database, queries, gt, qcat)
