"""Exact nearest-neighbour search over a static 3D KD-tree.

The tree splits at the median of the axis with the widest extent and stores
points contiguously in leaf order. Queries minimise the squared distance
``dx*dx + dy*dy + dz*dz`` (evaluated left to right) and take one square root
at the end, so results are bit-identical to a brute-force scan written the
same way. Equal distances resolve to the lowest original point index.
"""
from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

from .core import PointCloud, as_point, as_points
from .errors import EmptyCloud

LEAF_SIZE = 16

# the bundled TBB is too old for numba; prefer OpenMP, fall back to workqueue
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True)
def _select(perm, pts, lo, hi, k, dim):
    """Reorder perm[lo:hi] so perm[k] holds the k-th smallest along ``dim``.

    Three-way partitioning keeps runs of equal coordinates linear.
    """
    while hi - lo > 1:
        a = pts[perm[lo], dim]
        b = pts[perm[(lo + hi) // 2], dim]
        c = pts[perm[hi - 1], dim]
        if a > b:
            a, b = b, a
        if b > c:
            b = c
        if a > b:
            b = a
        pivot = b
        lt = lo
        i = lo
        gt = hi
        while i < gt:
            v = pts[perm[i], dim]
            if v < pivot:
                tmp = perm[lt]
                perm[lt] = perm[i]
                perm[i] = tmp
                lt += 1
                i += 1
            elif v > pivot:
                gt -= 1
                tmp = perm[gt]
                perm[gt] = perm[i]
                perm[i] = tmp
            else:
                i += 1
        if k < lt:
            hi = lt
        elif k >= gt:
            lo = gt
        else:
            return


@njit(cache=True)
def _build(pts, leaf_size):
    n = pts.shape[0]
    max_nodes = 4 * (n // max(leaf_size, 1)) + 8
    start = np.empty(max_nodes, np.int64)
    end = np.empty(max_nodes, np.int64)
    split_dim = np.full(max_nodes, -1, np.int64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    # tight bounding box of each node: lo xyz, hi xyz
    bbox = np.empty((max_nodes, 6), np.float64)
    perm = np.arange(n)

    start[0] = 0
    end[0] = n
    n_nodes = 1
    stack = np.empty(max_nodes, np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        lo = start[node]
        hi = end[node]
        for d in range(3):
            bbox[node, d] = np.inf
            bbox[node, 3 + d] = -np.inf
        for i in range(lo, hi):
            for d in range(3):
                v = pts[perm[i], d]
                if v < bbox[node, d]:
                    bbox[node, d] = v
                if v > bbox[node, 3 + d]:
                    bbox[node, 3 + d] = v
        if hi - lo <= leaf_size:
            continue
        dim = 0
        widest = bbox[node, 3] - bbox[node, 0]
        for d in range(1, 3):
            if bbox[node, 3 + d] - bbox[node, d] > widest:
                widest = bbox[node, 3 + d] - bbox[node, d]
                dim = d
        if widest <= 0.0:
            # all points coincide; keep as one leaf
            continue
        mid = lo + (hi - lo) // 2
        _select(perm, pts, lo, hi, mid, dim)
        split_dim[node] = dim
        l = n_nodes
        r = n_nodes + 1
        n_nodes += 2
        start[l] = lo
        end[l] = mid
        start[r] = mid
        end[r] = hi
        left[node] = l
        right[node] = r
        stack[top] = r
        stack[top + 1] = l
        top += 2
    return (perm, start[:n_nodes].copy(), end[:n_nodes].copy(), split_dim[:n_nodes].copy(),
            bbox[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy())


@njit(cache=True, inline="always")
def _box_d2(q0, q1, q2, bbox, node):
    # Lower bound on the computed squared distance to any point in the box.
    # Monotone rounding makes it exact: no point inside can evaluate smaller.
    g0 = 0.0
    if q0 < bbox[node, 0]:
        g0 = q0 - bbox[node, 0]
    elif q0 > bbox[node, 3]:
        g0 = q0 - bbox[node, 3]
    g1 = 0.0
    if q1 < bbox[node, 1]:
        g1 = q1 - bbox[node, 1]
    elif q1 > bbox[node, 4]:
        g1 = q1 - bbox[node, 4]
    g2 = 0.0
    if q2 < bbox[node, 2]:
        g2 = q2 - bbox[node, 2]
    elif q2 > bbox[node, 5]:
        g2 = q2 - bbox[node, 5]
    return g0 * g0 + g1 * g1 + g2 * g2


@njit(cache=True, nogil=True)
def _query_one(q0, q1, q2, leaf_pts, perm, start, end, split_dim, bbox, left, right,
               stack_node, stack_bound):
    best = np.inf
    best_idx = -1
    stack_node[0] = 0
    stack_bound[0] = _box_d2(q0, q1, q2, bbox, 0)
    top = 1
    while top > 0:
        top -= 1
        if stack_bound[top] > best:
            continue
        node = stack_node[top]
        while split_dim[node] >= 0:
            l = left[node]
            r = right[node]
            bl = _box_d2(q0, q1, q2, bbox, l)
            br = _box_d2(q0, q1, q2, bbox, r)
            if bl <= br:
                near, far, bfar, bnear = l, r, br, bl
            else:
                near, far, bfar, bnear = r, l, bl, br
            if bfar <= best:
                stack_node[top] = far
                stack_bound[top] = bfar
                top += 1
            if bnear > best:
                break
            node = near
        else:
            for i in range(start[node], end[node]):
                dx = q0 - leaf_pts[i, 0]
                dy = q1 - leaf_pts[i, 1]
                dz = q2 - leaf_pts[i, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best or (d2 == best and perm[i] < best_idx):
                    best = d2
                    best_idx = perm[i]
    return best, best_idx


@njit(cache=True)
def _spread_bits(v):
    v = v & 0x1FFFFF
    v = (v | (v << 32)) & 0x1F00000000FFFF
    v = (v | (v << 16)) & 0x1F0000FF0000FF
    v = (v | (v << 8)) & 0x100F00F00F00F00F
    v = (v | (v << 4)) & 0x10C30C30C30C30C3
    v = (v | (v << 2)) & 0x1249249249249249
    return v


@njit(cache=True)
def _morton_codes(q):
    m = q.shape[0]
    lo = np.empty(3)
    span = np.empty(3)
    for d in range(3):
        lo[d] = q[:, d].min()
        span[d] = q[:, d].max() - lo[d]
        if span[d] <= 0.0:
            span[d] = 1.0
    codes = np.empty(m, np.int64)
    for j in range(m):
        code = 0
        for d in range(3):
            cell = np.int64((q[j, d] - lo[d]) / span[d] * 2097151.0)
            code |= _spread_bits(cell) << d
        codes[j] = code
    return codes


@njit(cache=True, parallel=True)
def _query_batch(queries, order, leaf_pts, perm, start, end, split_dim, bbox, left, right,
                 depth, n_chunks):
    m = queries.shape[0]
    dist = np.empty(m, np.float64)
    idx = np.empty(m, np.int64)
    for c in prange(n_chunks):
        stack_node = np.empty(depth + 2, np.int64)
        stack_bound = np.empty(depth + 2, np.float64)
        lo = c * m // n_chunks
        hi = (c + 1) * m // n_chunks
        for jj in range(lo, hi):
            j = order[jj]
            d2, k = _query_one(queries[j, 0], queries[j, 1], queries[j, 2], leaf_pts, perm,
                               start, end, split_dim, bbox, left, right,
                               stack_node, stack_bound)
            dist[j] = np.sqrt(d2)
            idx[j] = k
    return dist, idx


@njit(cache=True)
def _tree_depth(left, right):
    n = left.shape[0]
    depth = np.zeros(n, np.int64)
    best = 0
    # children always have larger ids than their parent
    for node in range(n):
        if left[node] >= 0:
            depth[left[node]] = depth[node] + 1
            depth[right[node]] = depth[node] + 1
            if depth[node] + 1 > best:
                best = depth[node] + 1
    return best


class SpatialIndex:
    """Immutable KD-tree over the points of a cloud."""

    def __init__(self, points: np.ndarray, leaf_size: int = LEAF_SIZE):
        pts = np.ascontiguousarray(as_points(points), dtype=np.float64)
        if len(pts) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        perm, start, end, sdim, bbox, left, right = _build(pts, leaf_size)
        self._perm = perm
        self._leaf_pts = np.ascontiguousarray(pts[perm])
        self._nodes = (start, end, sdim, bbox, left, right)
        self._depth = int(_tree_depth(left, right))
        self.size = len(pts)
        for a in (self._perm, self._leaf_pts, *self._nodes):
            a.setflags(write=False)

    def __len__(self) -> int:
        return self.size

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the nearest indexed point for each query row."""
        q = np.ascontiguousarray(as_points(queries), dtype=np.float64)
        if len(q) == 0:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        if not np.isfinite(q).all():
            raise ValueError("queries must be finite")
        # visiting queries along a Morton curve keeps tree nodes hot in cache;
        # each result is written to its own slot, so order never leaks out
        order = np.argsort(_morton_codes(q), kind="stable")
        n_chunks = min(len(q), 4 * numba.get_num_threads())
        return _query_batch(q, order, self._leaf_pts, self._perm, *self._nodes, self._depth,
                            n_chunks)


def build(cloud: PointCloud | np.ndarray, leaf_size: int = LEAF_SIZE) -> SpatialIndex:
    pts = cloud.points if isinstance(cloud, PointCloud) else cloud
    return SpatialIndex(pts, leaf_size)


def nearest(index: SpatialIndex, q) -> tuple[float, int]:
    d, i = index.query(as_point(q)[None, :])
    return float(d[0]), int(i[0])


def nearest_batch(index: SpatialIndex, queries: PointCloud | np.ndarray) -> np.ndarray:
    pts = queries.points if isinstance(queries, PointCloud) else queries
    return index.query(pts)[0]
