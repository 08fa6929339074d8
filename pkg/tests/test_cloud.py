from __future__ import annotations

import numpy as np
import pytest

from cadloop.cloud import (
    CorruptPayload,
    InsufficientSamples,
    build_discrepancy_cloud,
    cross_offsets,
    init_discrepancy_cloud,
    parse_cloud,
    select_top_k,
    serialize_cloud,
)
from cadloop.mesh import box_mesh, normalize, sample_surface_arrays
from cadloop.proximity import brute_force_nearest


def test_offsets_analytic(unit_cube):
    off = cross_offsets([(2, 0.5, 0.5), (0.5, 0.5, 1.0)], unit_cube)
    assert np.allclose(off[0], (-1, 0, 0)) and np.allclose(off[1], 0)


def test_offsets_match_brute_force(unit_cube):
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 2, size=(100, 3))
    off = cross_offsets(pts, unit_cube)
    for p, o in zip(pts, off):
        near, d = brute_force_nearest(unit_cube, p)
        assert np.linalg.norm(o) == pytest.approx(d, abs=1e-9)
        assert np.allclose(p + o, near, atol=1e-9)


def test_top_k_order_and_ties():
    pts = np.arange(30, dtype=float).reshape(10, 3)
    offs = np.zeros((10, 3))
    offs[:, 0] = [0.1, 0.05, 5.0, 0.1, 0.0, 0.1, 0.02, 0.0, 0.0, 0.01]
    p, o = select_top_k(pts, offs, 4)
    assert np.allclose(o[:, 0], [5.0, 0.1, 0.1, 0.1])
    assert np.array_equal(p[:, 0], [6, 0, 9, 15])  # ties keep sample order
    with pytest.raises(InsufficientSamples):
        select_top_k(pts, offs, 11)


def test_top_k_is_maximal():
    rng = np.random.default_rng(0)
    pts, offs = rng.normal(size=(500, 3)), rng.normal(size=(500, 3))
    _, o = select_top_k(pts, offs, 128)
    chosen = np.linalg.norm(o, axis=1)
    assert np.all(np.diff(chosen) <= 0)
    rest = np.sort(np.linalg.norm(offs, axis=1))[:-128]
    assert rest.max() <= chosen.min()


def test_identical_meshes_give_zero_offsets():
    cube = box_mesh((-40, -40, -40), (40, 40, 40))
    cloud = build_discrepancy_cloud(cube, cube, 0, n_dense=3000)
    assert len(cloud.target_points) == 128 and len(cloud.pred_points) == 128
    assert np.abs(cloud.features()[:, 3:]).max() < 1e-9


def test_shifted_cube():
    cube = box_mesh((-40, -40, -40), (40, 40, 40))
    shifted = cube.translated((20, 0, 0))  # 0.2 in the common frame
    cloud = build_discrepancy_cloud(cube, shifted, 1, n_dense=5000)
    assert 0.19 <= np.linalg.norm(cloud.target_offsets, axis=1).max() <= 0.21
    # moving along an offset lands on the other surface
    other = normalize(shifted, "prediction_over_100")[0]
    _, d = other.surface_index.query(cloud.target_points + cloud.target_offsets)
    assert d.max() < 1e-6


def test_cloud_determinism(box_render):
    other = box_render.translated((3, -2, 1))
    a = build_discrepancy_cloud(box_render, other, 5, n_dense=2000)
    b = build_discrepancy_cloud(box_render, other, 5, n_dense=2000)
    assert a == b


def test_init_cloud(box_render):
    cloud = init_discrepancy_cloud(box_render, 3)
    assert np.array_equal(cloud.target_offsets, -cloud.target_points)
    assert np.all(cloud.pred_points == 0)
    a = cloud.pred_offsets[np.lexsort(cloud.pred_offsets.T)]
    b = cloud.target_points[np.lexsort(cloud.target_points.T)]
    assert np.array_equal(a, b)
    p = sample_surface_arrays(normalize(box_render, "prediction_over_100")[0], 128, 3)[0]
    assert np.array_equal(cloud.target_points, p)


def test_serialization(box_render):
    cloud = build_discrepancy_cloud(box_render, box_render.translated((5, 0, 0)), 0, n_dense=1000)
    blob = serialize_cloud(cloud)
    assert blob[:5] == b"DCLD1"
    assert parse_cloud(blob) == cloud
    back = parse_cloud(serialize_cloud(cloud, "json"))
    assert np.allclose(back.features(), cloud.features(), atol=1e-12, rtol=0)
    with pytest.raises(CorruptPayload):
        parse_cloud(blob[:-3])
    with pytest.raises(CorruptPayload):
        parse_cloud(b"DCL")
    with pytest.raises(CorruptPayload):
        parse_cloud(b'{"format": "other"}')
