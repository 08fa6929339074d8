from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadloop.mesh import (
    Aabb,
    DegenerateExtent,
    MalformedGeometry,
    TriangleMesh,
    box_mesh,
    clean_triangles,
    icosphere,
    normalize,
    sample_surface,
    sample_surface_arrays,
)


def test_mesh_validation():
    with pytest.raises(MalformedGeometry):
        TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), int))
    with pytest.raises(MalformedGeometry):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, np.nan, 0]], [[0, 1, 2]])
    with pytest.raises(MalformedGeometry):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
    with pytest.raises(MalformedGeometry):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])


def test_box_mesh_is_closed_and_outward(unit_cube):
    assert unit_cube.n_triangles == 12
    assert unit_cube.boundary_edge_count() == 0
    assert unit_cube.euler_characteristic() == 2
    assert unit_cube.signed_volume() == pytest.approx(1.0)
    assert np.allclose(np.linalg.norm(unit_cube.face_normals, axis=1), 1.0, atol=1e-6)
    # normals point away from the centre
    centres = unit_cube.corners.mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", centres - 0.5, unit_cube.face_normals) > 0)


def test_mesh_is_read_only(unit_cube):
    with pytest.raises(ValueError):
        unit_cube.vertices[0, 0] = 5.0


def test_clean_triangles_drops_degenerates():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]]
    m = clean_triangles(v, [[0, 1, 2], [0, 1, 3], [1, 1, 2]])
    assert m.n_triangles == 1


def test_sampling_per_face_counts(unit_cube):
    pos, normals, _ = sample_surface_arrays(unit_cube, 6000, 7)
    axis = np.argmax(np.abs(normals), axis=1)
    side = normals[np.arange(len(normals)), axis] > 0
    counts = np.bincount(axis * 2 + side, minlength=6)
    assert np.all(np.abs(counts - 1000) <= 100), counts


def test_single_triangle_samples_are_inside():
    tri = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    for s in sample_surface(tri, 3, 0):
        x, y, z = s.position
        assert z == 0 and x >= 0 and y >= 0 and x + y <= 1 + 1e-12
        assert np.allclose(s.normal, [0, 0, 1])


def test_sampling_is_deterministic(unit_cube):
    a = sample_surface_arrays(unit_cube, 500, 3)
    b = sample_surface_arrays(unit_cube, 500, 3)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_sampling_is_area_uniform():
    # two triangles with areas in ratio 1:3
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [3, 0, 1], [0, 1, 1]]
    m = TriangleMesh(v, [[0, 1, 2], [3, 4, 5]])
    _, _, tri = sample_surface_arrays(m, 20000, 1)
    n1 = np.count_nonzero(tri == 1)
    p = 0.75
    sigma = np.sqrt(20000 * p * (1 - p))
    assert abs(n1 - 20000 * p) < 4 * sigma


def test_normalize_prediction_frame():
    m, tf = normalize(box_mesh((-100, -100, -100), (100, 100, 100)), "prediction_over_100")
    assert np.allclose(m.aabb.min, -1) and np.allclose(m.aabb.max, 1)
    assert tf.scale == 0.01


def test_normalize_unit_cube_fixed_point(unit_cube):
    m, tf = normalize(unit_cube, "unit_cube_01")
    assert tf.scale == 1.0 and np.allclose(tf.translation, 0)
    assert np.array_equal(m.vertices, unit_cube.vertices)


def test_normalize_box_scaling():
    m, tf = normalize(box_mesh((0, 0, 0), (2, 1, 1)), "unit_cube_01")
    assert tf.scale == 0.5
    assert np.allclose(m.aabb.min, [0, 0.25, 0.25]) and np.allclose(m.aabb.max, [1, 0.75, 0.75])


def test_normalize_rejects_point_extent():
    with pytest.raises(DegenerateExtent):
        from cadloop.mesh import normalization_for

        normalization_for(Aabb(np.zeros(3), np.zeros(3)), "unit_cube_01")


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    st.floats(0.1, 30),
    st.sampled_from(["unit_cube_01", "signed_cube_11", "prediction_over_100"]),
)
def test_normalize_round_trip(offset, size, frame):
    m = box_mesh(offset, np.asarray(offset) + [size, size / 2, size / 3])
    n, tf = normalize(m, frame)
    assert np.allclose(tf.invert(n.vertices), m.vertices, atol=1e-9)


def test_icosphere_volume():
    s = icosphere(1.0, subdivisions=4)
    assert s.boundary_edge_count() == 0
    assert s.signed_volume() == pytest.approx(4 / 3 * np.pi, rel=0.01)


def test_submesh_opens_boundary(unit_cube):
    keep = np.ones(12, bool)
    keep[0] = False
    sub = unit_cube.submesh(keep)
    assert sub.n_triangles == 11 and sub.boundary_edge_count() == 3
