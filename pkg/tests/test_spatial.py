import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomeval.core import PointCloud
from geomeval.errors import EmptyCloud
from geomeval.spatial import build, nearest, nearest_batch
from oracles import brute_nn


def test_single_point_index():
    index = build(PointCloud([[0, 0, 0]]))
    assert len(index) == 1
    assert nearest(index, [0, 0, 0.003]) == (0.003, 0)


def test_large_index_size(rng):
    assert len(build(PointCloud(rng.random((100_000, 3))))) == 100_000


def test_empty_cloud_rejected():
    with pytest.raises(EmptyCloud):
        build(PointCloud(np.zeros((0, 3))))


def test_cube_center_tie_goes_to_lowest_index():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    d, i = nearest(build(PointCloud(corners)), [0.5, 0.5, 0.5])
    assert d == pytest.approx(np.sqrt(3) / 2, abs=1e-15)
    assert i == 0
    # reversed order: index 0 is now the (1, 1, 1) corner
    d, i = nearest(build(PointCloud(corners[::-1])), [0.5, 0.5, 0.5])
    assert i == 0


def test_random_queries_match_exhaustive_scan(rng):
    pts = rng.random((1000, 3))
    queries = rng.random((1000, 3))
    dist, idx = build(pts).query(queries)
    bd, bi = brute_nn(pts, queries)
    np.testing.assert_array_equal(dist, bd)
    np.testing.assert_array_equal(idx, bi)


def test_batch_on_indexed_points_is_zero(rng):
    cloud = PointCloud(rng.normal(size=(5000, 3)))
    np.testing.assert_array_equal(nearest_batch(build(cloud), cloud), 0.0)


def test_batch_single_query(rng):
    index = build(rng.random((300, 3)))
    q = rng.random(3)
    assert nearest_batch(index, q[None, :])[0] == nearest(index, q)[0]


def test_batch_equals_sequential_loop(rng):
    pts = rng.random((10_000, 3))
    queries = rng.random((10_000, 3))
    index = build(pts)
    batch = nearest_batch(index, queries)
    seq = np.array([nearest(index, q)[0] for q in queries])
    np.testing.assert_array_equal(batch, seq)


def test_duplicates_and_planar_data(rng):
    # tabletop-like data: many points share z, and every point appears twice
    xy = rng.random((2000, 2))
    pts = np.column_stack([xy, np.zeros(2000)])
    pts = np.concatenate([pts, pts])
    queries = np.column_stack([rng.random((500, 2)), rng.uniform(-0.01, 0.01, 500)])
    dist, idx = build(pts).query(queries)
    bd, bi = brute_nn(pts, queries)
    np.testing.assert_array_equal(dist, bd)
    np.testing.assert_array_equal(idx, bi)
    assert (idx < 2000).all()


def test_all_points_identical():
    pts = np.ones((100, 3))
    d, i = build(pts).query([[1, 1, 2]])
    assert d[0] == 1.0 and i[0] == 0


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2000), st.integers(1, 2000),
       st.sampled_from(["uniform", "grid", "sphere"]), st.sampled_from([1, 4, 16]))
def test_exactness_property(seed, n, m, kind, leaf):
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        pts, queries = rng.random((n, 3)), rng.random((m, 3))
    elif kind == "grid":
        # integer lattice forces many exact distance ties
        pts = rng.integers(0, 6, (n, 3)).astype(float)
        queries = rng.integers(0, 12, (m, 3)) / 2.0
    else:
        pts = rng.normal(size=(n, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        queries = rng.normal(size=(m, 3)) * 1.01
    dist, idx = build(pts, leaf_size=leaf).query(queries)
    bd, bi = brute_nn(pts, queries)
    np.testing.assert_array_equal(dist, bd)
    np.testing.assert_array_equal(idx, bi)


def test_rebuild_is_deterministic(rng):
    pts = rng.random((20_000, 3))
    queries = rng.random((5000, 3))
    a = build(pts).query(queries)
    b = build(pts.copy()).query(queries)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_non_finite_query_rejected():
    with pytest.raises(Exception):
        nearest(build(np.zeros((2, 3))), [np.nan, 0, 0])
