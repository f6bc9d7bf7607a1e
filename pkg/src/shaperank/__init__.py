"""Fine-grained 3D shape retrieval: descriptor kNN search plus geometric re-ranking."""

__version__ = "0.1.0"

from .descriptor import FeatureSet, compute_d2, feature_distance, load_features
from .errors import ShapeRerankError
from .evaluation import GroundTruth, category_ratio, gt_ranking, top1_chamfer, topk_accuracy
from .index import CandidateSet, FeatureIndex, build_feature_index, knn, load_index, save_index
from .metrics import SpatialIndex, build_spatial_index, chamfer, mscd, nn_distances, scd
from .pipeline import RetrievalConfig, RetrievalResult, rank, rerank, retrieve
from .pointcloud import Database, PointCloud, downsample, load_point_cloud, normalize
from .synthetic import SyntheticSpec, generate_synthetic
