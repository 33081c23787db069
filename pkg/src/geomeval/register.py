"""Metric registration of reconstructions and ground-truth placement.

SfM output lives in an arbitrary frame that differs from the metric world
frame by a similarity transform. Given 3D marker correspondences we recover
that transform in closed form: an SVD of the cross-covariance solves the
least-squares similarity problem, with a sign correction that forbids reflections.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PointCloud, RigidPose, SimilarityTransform, TriangleMesh, as_points
from .errors import DegenerateConfiguration, TooFewPairs

COLLINEAR_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    sources: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        src = np.array(as_points(self.sources), dtype=np.float64)
        dst = np.array(as_points(self.targets), dtype=np.float64)
        if src.shape != dst.shape:
            raise ValueError(f"{len(src)} sources but {len(dst)} targets")
        if len(src) < 3:
            raise TooFewPairs(f"need at least 3 correspondences, got {len(src)}")
        if not (np.isfinite(src).all() and np.isfinite(dst).all()):
            raise ValueError("correspondences must be finite")
        sv = np.linalg.svd(src - src.mean(axis=0), compute_uv=False)
        # rank >= 2 pins the rotation; coplanar markers are fine
        if sv[0] == 0.0 or sv[1] <= COLLINEAR_TOL * sv[0]:
            raise DegenerateConfiguration("source points are collinear or coincident")
        src.setflags(write=False)
        dst.setflags(write=False)
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "targets", dst)

    @classmethod
    def from_pairs(cls, pairs) -> CorrespondenceSet:
        pairs = list(pairs)
        if len(pairs) < 3:
            raise TooFewPairs(f"need at least 3 correspondences, got {len(pairs)}")
        return cls([s for s, _ in pairs], [t for _, t in pairs])

    def __len__(self) -> int:
        return len(self.sources)


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    transform: SimilarityTransform
    rms_residual: float
    per_pair_residuals: np.ndarray

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "rms_residual": self.rms_residual,
            "per_pair_residuals": self.per_pair_residuals.tolist(),
        }


def residuals(t: SimilarityTransform, c: CorrespondenceSet) -> np.ndarray:
    return np.linalg.norm(t.apply(c.sources) - c.targets, axis=1)


def estimate_similarity(c: CorrespondenceSet) -> RegistrationResult:
    """Least-squares scale, rotation and translation with target ~ s R source + t."""
    src, dst = c.sources, c.targets
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = np.mean(np.sum(xs * xs, axis=1))

    cov = xd.T @ xs / len(src)
    u, sv, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rot = (u * sign) @ vt
    scale = float(sv @ sign) / var_s
    if scale <= 0:
        raise DegenerateConfiguration("correspondences imply a non-positive scale")
    trans = mu_d - scale * (rot @ mu_s)

    t = SimilarityTransform(scale, rot, trans)
    r = residuals(t, c)
    return RegistrationResult(t, float(np.sqrt(np.mean(r * r))), r)


def register_cloud(cloud: PointCloud, t: SimilarityTransform) -> PointCloud:
    return PointCloud(t.apply(cloud.points), cloud.colors)


def place_ground_truth(mesh: TriangleMesh, pose: RigidPose) -> TriangleMesh:
    return TriangleMesh(pose.apply(mesh.vertices), mesh.faces)
