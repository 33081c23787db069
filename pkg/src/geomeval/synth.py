"""Synthetic ground-truth / reconstruction pairs with known metric values.

Randomness comes from numpy's PCG64 generator (``np.random.default_rng``)
seeded with the caller's integer, so every output is a pure function of its
parameters and seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (AxisAlignedBox, PointCloud, RigidPose, SimilarityTransform, invert,
                   random_rotation)
from .geomio import ObjectPlacement, SceneManifest, write_manifest, write_ply_pointcloud


@dataclass(frozen=True)
class DegradationSpec:
    normal_noise_sigma: float = 0.0
    dropout_fraction: float = 0.0
    outlier_count: int = 0
    outlier_box: AxisAlignedBox | None = None
    uniform_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # constant displacement along the surface normal (inflates a sphere)
    normal_offset: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.normal_noise_sigma >= 0:
            raise ValueError(f"normal_noise_sigma must be >= 0, got {self.normal_noise_sigma}")
        if not 0.0 <= self.dropout_fraction < 1.0:
            raise ValueError(f"dropout_fraction must be in [0, 1), got {self.dropout_fraction}")
        if self.outlier_count < 0:
            raise ValueError(f"outlier_count must be >= 0, got {self.outlier_count}")
        if self.outlier_count and self.outlier_box is None:
            raise ValueError("outlier_box is required when outlier_count > 0")
        off = np.asarray(self.uniform_offset, dtype=np.float64)
        if off.shape != (3,) or not np.isfinite(off).all():
            raise ValueError(f"uniform_offset must be a finite 3-vector, got {self.uniform_offset}")
        if not np.isfinite(self.normal_offset):
            raise ValueError("normal_offset must be finite")


def make_sphere_cloud(radius: float, n: int, seed: int) -> PointCloud:
    """``n`` points uniform by area on a sphere centred at the origin."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return PointCloud(radius * v)


def sphere_normals(cloud: PointCloud) -> np.ndarray:
    p = cloud.points
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _box_faces(box: AxisAlignedBox):
    # (axis, plane value, face area) for the six faces
    e = box.extent()
    faces = []
    for axis in range(3):
        a, b = [k for k in range(3) if k != axis]
        for plane in (box.min[axis], box.max[axis]):
            faces.append((axis, plane, e[a] * e[b]))
    return faces


def make_box_cloud(box: AxisAlignedBox, n: int, seed: int) -> PointCloud:
    """``n`` points uniform by area over the six faces of ``box``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    faces = _box_faces(box)
    areas = np.array([f[2] for f in faces])
    if not areas.sum() > 0:
        raise ValueError("box has zero surface area")
    rng = np.random.default_rng(seed)
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = box.min + rng.random((n, 3)) * box.extent()
    for k, (axis, plane, _) in enumerate(faces):
        pts[face == k, axis] = plane
    return PointCloud(pts)


def box_normals(cloud: PointCloud, box: AxisAlignedBox) -> np.ndarray:
    """Outward normal of the face each boundary point lies on (first match on edges)."""
    p = cloud.points
    gaps = np.concatenate([np.abs(p - box.min), np.abs(p - box.max)], axis=1)
    k = np.argmin(gaps, axis=1)
    normals = np.zeros_like(p)
    normals[np.arange(len(p)), k % 3] = np.where(k < 3, -1.0, 1.0)
    return normals


def degrade(cloud: PointCloud, surface_normals, spec: DegradationSpec) -> PointCloud:
    """Dropout, normal offset and noise, uniform offset, then appended outliers."""
    normals = np.asarray(surface_normals, dtype=np.float64)
    if normals.shape != cloud.points.shape:
        raise ValueError("one normal per point is required")
    if len(normals) and np.abs(np.linalg.norm(normals, axis=1) - 1.0).max() > 1e-9:
        raise ValueError("normals must be unit length")
    rng = np.random.default_rng(spec.seed)
    keep = rng.random(len(cloud)) < 1.0 - spec.dropout_fraction
    pts = cloud.points[keep]
    nrm = normals[keep]
    disp = spec.normal_offset + spec.normal_noise_sigma * rng.standard_normal(len(pts))
    pts = pts + disp[:, None] * nrm + np.asarray(spec.uniform_offset, dtype=np.float64)
    colors = None if cloud.colors is None else cloud.colors[keep]
    if spec.outlier_count:
        box = spec.outlier_box
        out = box.min + rng.random((spec.outlier_count, 3)) * box.extent()
        pts = np.concatenate([pts, out])
        if colors is not None:
            colors = np.concatenate([colors, np.full((spec.outlier_count, 3), 128, np.uint8)])
    return PointCloud(pts, colors)


@dataclass
class SynthConfig:
    shape: str = "sphere"
    n: int = 100_000
    # ground-truth sample size; defaults to n
    gt_n: int | None = None
    radius: float = 0.05
    box_size: tuple[float, float, float] = (0.08, 0.06, 0.12)
    seed: int = 0
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    # store the reconstruction in a random similarity frame with marker pairs
    unregistered: bool = False
    scene_id: str = "synthetic"
    table_height: float = 0.0

    def validate(self):
        if self.shape not in ("sphere", "box"):
            raise ValueError(f"unknown shape {self.shape!r}")
        gt_n = self.n if self.gt_n is None else self.gt_n
        if self.n < 1 or gt_n < self.n:
            raise ValueError(f"need 1 <= n <= gt_n, got n={self.n}, gt_n={gt_n}")
        if self.shape == "sphere" and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.shape == "box" and not all(s > 0 for s in self.box_size):
            raise ValueError("box sizes must be positive")


@dataclass
class SyntheticScene:
    ground_truth: PointCloud  # object frame
    pose: RigidPose
    reconstruction: PointCloud  # as stored on disk
    true_transform: SimilarityTransform | None = None


def _object_sample(cfg: SynthConfig, n: int):
    if cfg.shape == "sphere":
        gt = make_sphere_cloud(cfg.radius, n, cfg.seed)
        return gt, sphere_normals(gt), cfg.radius
    half = np.asarray(cfg.box_size, dtype=np.float64) / 2
    box = AxisAlignedBox(-half, half)
    gt = make_box_cloud(box, n, cfg.seed)
    return gt, box_normals(gt, box), half[2]


def _marker_targets(half_extent: float, z: float) -> np.ndarray:
    # four coplanar markers on the table around the object
    s = half_extent + 0.1
    return np.array([[-s, -s, z], [s, -s, z], [s, s, z], [-s, s, z]])


def _margin(d: DegradationSpec) -> float:
    return 0.01 + abs(d.normal_offset) + 6 * d.normal_noise_sigma + float(np.abs(d.uniform_offset).max())


def make_scene(cfg: SynthConfig) -> SyntheticScene:
    cfg.validate()
    gt_n = cfg.n if cfg.gt_n is None else cfg.gt_n
    gt, normals, half_height = _object_sample(cfg, gt_n)
    # lift the object so no degraded point falls below the table
    lift = _margin(cfg.degradation)
    pose = RigidPose(np.eye(3), [0.0, 0.0, cfg.table_height + lift + half_height])

    base = gt.select(np.arange(cfg.n))
    recon_obj = degrade(base, normals[: cfg.n], cfg.degradation)
    recon = PointCloud(pose.apply(recon_obj.points), recon_obj.colors)

    true_t = None
    if cfg.unregistered:
        rng = np.random.default_rng(cfg.seed + 1)
        true_t = SimilarityTransform(float(np.exp(rng.uniform(np.log(0.2), np.log(5.0)))),
                                     random_rotation(rng), rng.uniform(-1.0, 1.0, 3))
        # stored cloud lives in the SfM frame; the transform maps it back
        to_sfm = invert(true_t)
        recon = PointCloud(to_sfm.apply(recon.points), recon.colors)
    return SyntheticScene(gt, pose, recon, true_t)


def write_scene(cfg: SynthConfig, out_dir) -> Path:
    """Write ``reconstruction.ply``, ``gt.ply`` and ``manifest.json``; return the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = make_scene(cfg)
    recon_path = out / "reconstruction.ply"
    gt_path = out / "gt.ply"
    write_ply_pointcloud(scene.reconstruction, recon_path, "binary_little_endian", dtype="double")
    write_ply_pointcloud(scene.ground_truth, gt_path, "binary_little_endian", dtype="double")

    d = cfg.degradation
    world_gt = scene.pose.apply(scene.ground_truth.points)
    margin = _margin(d)
    crop = AxisAlignedBox(world_gt.min(axis=0) - margin, world_gt.max(axis=0) + margin)

    markers = None
    if scene.true_transform is not None:
        targets = _marker_targets(float(np.abs(world_gt[:, :2]).max()), cfg.table_height)
        sources = invert(scene.true_transform).apply(targets)
        markers = tuple((s, t) for s, t in zip(sources, targets))

    manifest = SceneManifest(
        scene_id=cfg.scene_id,
        reconstruction_path=recon_path,
        objects=(ObjectPlacement(gt_path, scene.pose),),
        crop_box=crop,
        table_height=cfg.table_height,
        marker_correspondences=markers,
    )
    path = out / "manifest.json"
    write_manifest(manifest, path)
    return path
