"""On-disk formats: JSON manifests and built database directories.

Manifest (``manifest.json``)::

    {
      "database": [{"id": "chair_0001", "path": "models/chair_0001.xyz", "category": "chair"}],
      "queries":  [{"id": "q0000", "path": "queries/q0000.xyz", "ground_truth": "chair_0001",
                    "category": "chair"}],
      "features": {"database": "db_features.txt", "queries": "query_features.txt"}
    }

Paths are relative to the manifest file. ``queries``, the query ``category``
and the whole ``features`` block are optional.

Database directory (written by :func:`build_database_dir`)::

    db.json         settings + model list
    clouds/<id>.xyz normalized, resampled model clouds
    features.txt    one feature record per model
    index.srnk      feature index
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .descriptor import (
    BUILTIN_SOURCE,
    D2_BINS,
    D2_PAIRS,
    FeatureSet,
    compute_d2,
    load_features,
    save_features,
)
from .errors import ManifestError, ShapeRerankError, UnknownModelId
from .evaluation import GroundTruth
from .index import FeatureIndex, build_feature_index, load_index, save_index
from .pointcloud import (
    DEFAULT_RESOLUTION,
    Database,
    PointCloud,
    downsample,
    load_point_cloud,
    normalize,
    save_xyz,
)

DB_FORMAT = 1


@dataclass(frozen=True)
class ModelEntry:
    id: str
    path: Path
    category: str


@dataclass(frozen=True)
class QueryEntry:
    id: str
    path: Path
    ground_truth: str | None = None
    category: str | None = None


@dataclass(frozen=True)
class Manifest:
    database: list
    queries: list = field(default_factory=list)
    database_features: Path | None = None
    query_features: Path | None = None
    root: Path = Path(".")

    def ground_truth(self) -> GroundTruth:
        cats = {m.id: m.category for m in self.database}
        models = {}
        categories = {}
        for q in self.queries:
            if q.ground_truth is None:
                continue
            models[q.id] = q.ground_truth
            categories[q.id] = q.category or cats[q.ground_truth]
        return GroundTruth(models, categories)


def _require(entry, key, where):
    try:
        value = entry[key]
    except (KeyError, TypeError):
        raise ManifestError(f"{where}: missing field {key!r}") from None
    if not isinstance(value, str) or not value:
        raise ManifestError(f"{where}: field {key!r} must be a non-empty string")
    return value


def read_manifest(path) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict) or "database" not in data:
        raise ManifestError(f"{path}: top-level object with a 'database' list expected")
    root = path.parent

    models = []
    seen = set()
    for i, e in enumerate(data["database"]):
        where = f"{path}: database[{i}]"
        mid = _require(e, "id", where)
        if mid in seen:
            raise ManifestError(f"{where}: duplicate model id {mid!r}")
        seen.add(mid)
        models.append(ModelEntry(mid, root / _require(e, "path", where), _require(e, "category", where)))
    if not models:
        raise ManifestError(f"{path}: database section is empty")

    queries = []
    qseen = set()
    for i, e in enumerate(data.get("queries", [])):
        where = f"{path}: queries[{i}]"
        qid = _require(e, "id", where)
        if qid in qseen:
            raise ManifestError(f"{where}: duplicate query id {qid!r}")
        qseen.add(qid)
        gt = e.get("ground_truth")
        if gt is not None and gt not in seen:
            raise ManifestError(f"{where}: ground truth {gt!r} is not a database id")
        queries.append(QueryEntry(qid, root / _require(e, "path", where), gt, e.get("category")))

    feats = data.get("features") or {}
    dbf = feats.get("database")
    qf = feats.get("queries")
    return Manifest(
        models,
        queries,
        root / dbf if dbf else None,
        root / qf if qf else None,
        root,
    )


def write_manifest(manifest_path, models, queries=(), features=None) -> None:
    """Write a manifest; ``models``/``queries`` are dicts with paths relative to it."""
    data = {"database": list(models), "queries": list(queries)}
    if features:
        data["features"] = dict(features)
    Path(manifest_path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_entry_cloud(entry) -> PointCloud:
    if not entry.path.is_file():
        raise ManifestError(f"cloud file not found: {entry.path}")
    try:
        cloud = load_point_cloud(entry.path)
    except ShapeRerankError as exc:
        raise type(exc)(f"{exc} (entry {entry.id!r})") from None
    return PointCloud(cloud.points, entry.id)


# ---------------------------------------------------------------------------
# built database directories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DescriptorOptions:
    bins: int = D2_BINS
    pairs: int = D2_PAIRS
    seed: int = 0


@dataclass
class DatabaseBundle:
    """Everything needed to answer queries against a built database."""

    database: Database
    features: FeatureSet
    index: FeatureIndex
    resolution: int = DEFAULT_RESOLUTION
    seed: int = 0
    descriptor: DescriptorOptions = DescriptorOptions()
    root: Path | None = None

    @property
    def builtin_features(self) -> bool:
        return self.features.source == BUILTIN_SOURCE

    def prepare_query(self, cloud: PointCloud, normalize_query: bool = False) -> PointCloud:
        """Bring a query to working resolution (and optionally normalize it).

        Queries are assumed to be aligned with the normalized CAD frame
        already, so by default they are not re-centred or re-scaled.
        """
        if normalize_query:
            cloud = normalize(cloud)
        return downsample(cloud, self.resolution, self.seed)

    def query_feature(self, cloud: PointCloud, external: FeatureSet | None = None):
        if self.builtin_features:
            d = self.descriptor
            return compute_d2(cloud, d.bins, d.pairs, d.seed)
        if external is None or cloud.id not in external:
            raise UnknownModelId(
                f"database uses {self.features.source} features; no query feature for {cloud.id!r}"
            )
        if external.dim != self.index.dim:
            raise ShapeRerankError(f"query features have dimension {external.dim}, index has {self.index.dim}")
        return external[cloud.id]


def prepare_model(cloud: PointCloud, resolution: int, seed: int) -> PointCloud:
    return normalize(downsample(cloud, resolution, seed))


def build_database_dir(
    manifest: Manifest,
    out_dir,
    resolution: int = DEFAULT_RESOLUTION,
    seed: int = 0,
    descriptor: DescriptorOptions = DescriptorOptions(),
) -> DatabaseBundle:
    """Normalize and resample all models, compute features, build and save the index."""
    out_dir = Path(out_dir)
    clouds = []
    for entry in manifest.database:
        clouds.append(prepare_model(load_entry_cloud(entry), resolution, seed))
    categories = {m.id: m.category for m in manifest.database}
    database = Database.from_clouds(clouds, categories)

    if manifest.database_features is not None:
        if not manifest.database_features.is_file():
            raise ManifestError(f"feature file not found: {manifest.database_features}")
        features = load_features(manifest.database_features)
        missing = [m for m in database.models if m not in features]
        if missing:
            raise UnknownModelId(f"{manifest.database_features}: no feature for model {missing[0]!r}")
        features = FeatureSet.from_dict({m: features[m] for m in database.models}, features.source)
    else:
        features = FeatureSet.from_dict(
            {c.id: compute_d2(c, descriptor.bins, descriptor.pairs, descriptor.seed) for c in clouds},
            BUILTIN_SOURCE,
        )
    index = build_feature_index(features)

    (out_dir / "clouds").mkdir(parents=True, exist_ok=True)
    entries = []
    for mid, cloud in database.models.items():
        rel = f"clouds/{mid}.xyz"
        save_xyz(cloud, out_dir / rel)
        entries.append({"id": mid, "path": rel, "category": database.category(mid)})
    save_features(features, out_dir / "features.txt")
    save_index(index, out_dir / "index.srnk")
    meta = {
        "format": DB_FORMAT,
        "resolution": resolution,
        "seed": seed,
        "features": {"source": features.source, "dim": features.dim},
        "descriptor": {"bins": descriptor.bins, "pairs": descriptor.pairs, "seed": descriptor.seed},
        "models": entries,
    }
    (out_dir / "db.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return DatabaseBundle(database, features, index, resolution, seed, descriptor, out_dir)


def load_database_dir(db_dir) -> DatabaseBundle:
    db_dir = Path(db_dir)
    meta_path = db_dir / "db.json"
    if not meta_path.is_file():
        raise ManifestError(f"{db_dir}: not a database directory (db.json missing)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format") != DB_FORMAT:
        raise ManifestError(f"{meta_path}: unsupported database format {meta.get('format')!r}")
    clouds = []
    categories = {}
    for e in meta["models"]:
        cloud = load_point_cloud(db_dir / e["path"])
        clouds.append(PointCloud(cloud.points, e["id"]))
        categories[e["id"]] = e["category"]
    database = Database.from_clouds(clouds, categories)
    features = load_features(db_dir / "features.txt", meta["features"]["dim"], meta["features"]["source"])
    index = load_index(db_dir / "index.srnk")
    if sorted(index.ids) != sorted(database.models):
        raise ManifestError(f"{db_dir}: index ids do not match database models")
    d = meta["descriptor"]
    return DatabaseBundle(
        database,
        features,
        index,
        meta["resolution"],
        meta["seed"],
        DescriptorOptions(d["bins"], d["pairs"], d["seed"]),
        db_dir,
    )


def write_synthetic(dataset, out_dir) -> Path:
    """Write a :class:`~shaperank.synthetic.SyntheticDataset` as clouds plus a manifest."""
    out_dir = Path(out_dir)
    (out_dir / "models").mkdir(parents=True, exist_ok=True)
    (out_dir / "queries").mkdir(parents=True, exist_ok=True)
    models = []
    for mid, cloud in dataset.database.models.items():
        rel = f"models/{mid}.xyz"
        save_xyz(cloud, out_dir / rel)
        models.append({"id": mid, "path": rel, "category": dataset.database.category(mid)})
    queries = []
    for q in dataset.queries:
        rel = f"queries/{q.id}.xyz"
        save_xyz(q, out_dir / rel)
        queries.append({
            "id": q.id,
            "path": rel,
            "ground_truth": dataset.ground_truth[q.id],
            "category": dataset.query_categories[q.id],
        })
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, models, queries)
    return manifest_path
