"""Geometric accuracy evaluation of 3D reconstructions against metric ground truth."""
from .core import AxisAlignedBox, PointCloud, RigidPose, SimilarityTransform, TriangleMesh
from .metrics import MetricsResult, ToleranceSpec, distance_profile, evaluate_pair
from .register import CorrespondenceSet, estimate_similarity, register_cloud
from .spatial import SpatialIndex, build, nearest, nearest_batch

__all__ = [
    "AxisAlignedBox", "PointCloud", "RigidPose", "SimilarityTransform", "TriangleMesh",
    "MetricsResult", "ToleranceSpec", "distance_profile", "evaluate_pair",
    "CorrespondenceSet", "estimate_similarity", "register_cloud",
    "SpatialIndex", "build", "nearest", "nearest_batch",
]
