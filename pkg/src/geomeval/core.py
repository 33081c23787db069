"""Geometry value types: point clouds, meshes, transforms and boxes.

All coordinates are meters, stored as float64 numpy arrays. Instances are
frozen and their arrays are marked read-only, so they can be shared between
workers without copying.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidTransform, MalformedFace, NonFiniteValue

ORTHONORMAL_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_point(p) -> np.ndarray:
    """Coerce to a finite float64 3-vector."""
    q = np.asarray(p, dtype=np.float64).reshape(-1)
    if q.shape != (3,):
        raise ValueError(f"expected 3 coordinates, got shape {np.shape(p)}")
    if not np.all(np.isfinite(q)):
        raise NonFiniteValue(f"non-finite point {q.tolist()}")
    return q


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.zeros((0, 3))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points with optional per-point RGB bytes."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(as_points(self.points), dtype=np.float64, order="C")
        bad = ~np.isfinite(pts).all(axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonFiniteValue(f"non-finite coordinate at point {i}", record_index=i)
        object.__setattr__(self, "points", _frozen(pts))
        if self.colors is not None:
            cols = np.array(self.colors, dtype=np.uint8, order="C").reshape(-1, 3)
            if len(cols) != len(pts):
                raise ValueError(f"{len(cols)} colors for {len(pts)} points")
            object.__setattr__(self, "colors", _frozen(cols))

    def __len__(self) -> int:
        return len(self.points)

    def select(self, mask: np.ndarray) -> PointCloud:
        """Subset by boolean mask or index array, keeping order and colors."""
        cols = None if self.colors is None else self.colors[mask]
        return PointCloud(self.points[mask], cols)

    def with_colors(self, colors) -> PointCloud:
        return PointCloud(self.points, colors)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        verts = np.array(as_points(self.vertices), dtype=np.float64, order="C")
        if not np.isfinite(verts).all():
            raise NonFiniteValue("non-finite mesh vertex")
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) and (faces.min() < 0 or faces.max() >= len(verts)):
            raise MalformedFace(f"face index out of range for {len(verts)} vertices")
        object.__setattr__(self, "vertices", _frozen(verts))
        object.__setattr__(self, "faces", _frozen(faces))

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)


def _check_rotation(r: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    r = np.array(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.isfinite(r).all():
        raise InvalidTransform(f"rotation must be a finite 3x3 matrix, got shape {r.shape}")
    if np.abs(r.T @ r - np.eye(3)).max() > tol:
        raise InvalidTransform("rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise InvalidTransform("rotation determinant is not +1")
    return _frozen(r)


def _check_translation(t) -> np.ndarray:
    t = np.array(t, dtype=np.float64).reshape(-1)
    if t.shape != (3,) or not np.isfinite(t).all():
        raise InvalidTransform("translation must be a finite 3-vector")
    return _frozen(t)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """x -> scale * rotation @ x + translation."""

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        s = float(self.scale)
        if not np.isfinite(s) or s <= 0:
            raise InvalidTransform(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(self, "translation", _check_translation(self.translation))

    @classmethod
    def identity(cls) -> SimilarityTransform:
        return cls()

    def apply(self, points) -> np.ndarray:
        """Map a single point (3,) or an (N, 3) array."""
        p = np.asarray(points, dtype=np.float64)
        return self.scale * (p @ self.rotation.T) + self.translation

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }


def apply_similarity(t: SimilarityTransform, p) -> np.ndarray:
    return t.apply(p)


def compose(a: SimilarityTransform, b: SimilarityTransform) -> SimilarityTransform:
    """Transform equivalent to applying ``b`` first, then ``a``."""
    return SimilarityTransform(
        scale=a.scale * b.scale,
        rotation=a.rotation @ b.rotation,
        translation=a.scale * (a.rotation @ b.translation) + a.translation,
    )


def invert(t: SimilarityTransform) -> SimilarityTransform:
    rt = t.rotation.T
    inv_s = 1.0 / t.scale
    return SimilarityTransform(scale=inv_s, rotation=rt, translation=-inv_s * (rt @ t.translation))


@dataclass(frozen=True, eq=False)
class RigidPose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        object.__setattr__(self, "translation", _check_translation(self.translation))

    @classmethod
    def from_matrix(cls, m, tol: float = ORTHONORMAL_TOL) -> RigidPose:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvalidTransform(f"pose must be 4x4, got shape {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidTransform("last row of pose must be 0 0 0 1")
        _check_rotation(m[:3, :3], tol)
        # bypass the stricter constructor tolerance once the caller's tol passed
        pose = object.__new__(cls)
        object.__setattr__(pose, "rotation", _frozen(m[:3, :3].copy()))
        object.__setattr__(pose, "translation", _check_translation(m[:3, 3]))
        return pose

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def as_similarity(self) -> SimilarityTransform:
        return SimilarityTransform(1.0, self.rotation, self.translation)


@dataclass(frozen=True, eq=False)
class AxisAlignedBox:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = as_point(self.min), as_point(self.max)
        if np.any(lo > hi):
            raise ValueError(f"box min {lo.tolist()} exceeds max {hi.tolist()}")
        object.__setattr__(self, "min", _frozen(lo))
        object.__setattr__(self, "max", _frozen(hi))

    def contains(self, points) -> np.ndarray:
        """Closed-box membership mask for an (N, 3) array."""
        p = as_points(points)
        return np.all((p >= self.min) & (p <= self.max), axis=1)

    def extent(self) -> np.ndarray:
        return self.max - self.min


def rot_x(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
