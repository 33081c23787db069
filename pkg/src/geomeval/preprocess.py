"""Reduce registered clouds and ground-truth meshes to comparable point sets."""
from __future__ import annotations

import numpy as np

from .core import AxisAlignedBox, PointCloud, TriangleMesh
from .errors import EmptyMesh, NoArea


def crop_to_box(cloud: PointCloud, box: AxisAlignedBox) -> PointCloud:
    """Keep points inside the closed box (boundary points included)."""
    return cloud.select(box.contains(cloud.points))


def filter_below_height(cloud: PointCloud, table_height: float) -> PointCloud:
    """Drop points strictly below ``table_height`` on the z (up) axis."""
    return cloud.select(cloud.points[:, 2] >= table_height)


def mesh_to_cloud_vertices(mesh: TriangleMesh) -> PointCloud:
    if len(mesh.vertices) == 0:
        raise EmptyMesh("mesh has no vertices")
    return PointCloud(mesh.vertices)


def sample_mesh_surface(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Draw ``n`` points uniformly by area over the mesh faces.

    A face is picked with probability proportional to its area, then a point
    inside it via the square-root barycentric mapping, which is uniform over
    the triangle.
    """
    areas = mesh.face_areas() if len(mesh.faces) else np.zeros(0)
    total = areas.sum()
    if not total > 0:
        raise NoArea("mesh has no face with positive area")
    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.column_stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2])
    tri = mesh.vertices[mesh.faces[face]]
    return PointCloud(np.einsum("nk,nkd->nd", bary, tri))


def prepare(cloud: PointCloud, box: AxisAlignedBox, table_height: float) -> PointCloud:
    """Crop, then height-filter."""
    return filter_below_height(crop_to_box(cloud, box), table_height)
