from __future__ import annotations

import sys

import numpy as np
import pytest

from cadloop.mesh import Aabb, TriangleMesh, box_mesh, icosphere, sample_surface_arrays
from cadloop.scan import (
    EmptyAfterHoles,
    ExternalToolError,
    ScanConfig,
    VirtualCamera,
    camera_trajectory,
    punch_holes,
    reconstruct_surface,
    scan_config_keys,
    simulate_scan,
    visible_points,
)


@pytest.fixture(scope="module")
def box_scan():
    cfg = ScanConfig(n_points=20_000, seed=4, recon_resolution=48)
    return simulate_scan(box_mesh((-30, -20, -10), (30, 20, 10)), cfg)


def test_trajectory_geometry():
    box = Aabb(np.array([-1.0, -1, -1]), np.array([1.0, 1, 1]))
    cams = camera_trajectory(box, ScanConfig(n_views=5, seed=3))
    assert len(cams) == 5
    dist = [np.linalg.norm(c.position) for c in cams]
    assert np.allclose(dist, 2.5 * np.sqrt(3))
    az = [np.arctan2(c.position[1], c.position[0]) for c in cams]
    steps = np.degrees(np.mod(np.diff(az), 2 * np.pi))
    assert np.allclose(steps, 72.0)
    el = np.degrees([np.arcsin(c.position[2] / d) for c, d in zip(cams, dist)])
    assert np.allclose(el, [30, -30, 30, -30, 30])


def test_trajectory_phase_is_seeded():
    box = Aabb(np.zeros(3), np.ones(3))
    a = camera_trajectory(box, ScanConfig(seed=1))
    b = camera_trajectory(box, ScanConfig(seed=1))
    c = camera_trajectory(box, ScanConfig(seed=2))
    assert np.array_equal(a[0].position, b[0].position)
    assert not np.array_equal(a[0].position, c[0].position)


def test_far_camera_sees_about_half_a_sphere():
    s = icosphere(1.0, subdivisions=4)
    pos, nrm, _ = sample_surface_arrays(s, 4000, 0)
    cam = VirtualCamera(np.array([0.0, 0.0, 1000.0]), np.zeros(3))
    frac = len(visible_points(pos, nrm, cam)) / len(pos)
    assert 0.4 <= frac <= 0.6


def test_near_camera_sees_the_spherical_cap():
    s = icosphere(1.0, subdivisions=4)
    pos, nrm, _ = sample_surface_arrays(s, 4000, 0)
    cam = VirtualCamera(np.array([0.0, 0.0, 3.0]), np.zeros(3))
    idx = visible_points(pos, nrm, cam)
    # horizon of a unit sphere seen from distance 3 lies at z = 1/3
    assert np.all(pos[idx, 2] > 1 / 3 - 0.05)
    assert len(idx) / len(pos) == pytest.approx(1 / 3, abs=0.06)


def test_back_faces_are_culled():
    s = icosphere(1.0, subdivisions=3)
    pos, nrm, _ = sample_surface_arrays(s, 2000, 0)
    cam = VirtualCamera(np.array([0.0, 0.0, 50.0]), np.zeros(3))
    front = len(visible_points(pos, nrm, cam))
    # only grazing samples at the silhouette survive with inverted normals
    assert front > 500 and len(visible_points(pos, -nrm, cam)) < 0.1 * front


def test_occluded_points_are_hidden():
    big = box_mesh((-10, -10, -10), (10, 10, 10))
    pos, nrm, _ = sample_surface_arrays(big, 5000, 1)
    hidden = np.array([[0.0, 0.0, -5.0]])
    cam = VirtualCamera(np.array([0.0, 0.0, 100.0]), np.zeros(3))
    idx = visible_points(np.vstack([pos, hidden]), np.vstack([nrm, [[0, 0, 1.0]]]), cam)
    assert len(pos) not in idx
    assert np.all(pos[idx[idx < len(pos)], 2] > 9.99)


def test_reconstruction_needs_points():
    with pytest.raises(ValueError):
        reconstruct_surface(np.zeros((99, 3)), np.ones((99, 3)))


def _surface_error(mesh, ref):
    _, d = ref.surface_index.query(mesh.vertices)
    return d.mean()


def test_cube_reconstruction_accuracy():
    cube = box_mesh((-20, -20, -20), (20, 20, 20))
    pos, nrm, _ = sample_surface_arrays(cube, 20_000, 0)
    res = 48
    recon = reconstruct_surface(pos, nrm, res)
    h = 40 / res
    assert recon.boundary_edge_count() == 0
    assert _surface_error(recon, cube) <= 2 * h
    # a missing face makes the reconstruction worse
    keep = nrm[:, 2] < 0.5
    worse = reconstruct_surface(pos[keep], nrm[keep], res)
    assert _surface_error(worse, cube) > _surface_error(recon, cube)


def test_scan_result(box_scan):
    assert len(box_scan.per_view_counts) == 5
    assert box_scan.merged_count <= 20_000
    assert box_scan.merged_count >= max(box_scan.per_view_counts)
    assert box_scan.scan_mesh.n_triangles > 0


def test_scan_is_deterministic(box_scan):
    cfg = ScanConfig(n_points=20_000, seed=4, recon_resolution=48)
    assert simulate_scan(box_mesh((-30, -20, -10), (30, 20, 10)), cfg) == box_scan


def test_holes():
    cube = box_mesh((-20, -20, -20), (20, 20, 20))
    pos, nrm, _ = sample_surface_arrays(cube, 20_000, 0)
    recon = reconstruct_surface(pos, nrm, 32)
    assert punch_holes(recon, ScanConfig(hole_count=(0, 0))) is recon
    holed = punch_holes(recon, ScanConfig(hole_count=(2, 2), hole_radius=(0.1, 0.1), seed=5))
    assert holed.n_triangles < recon.n_triangles
    assert holed.boundary_edge_count() > 0
    again = punch_holes(recon, ScanConfig(hole_count=(2, 2), hole_radius=(0.1, 0.1), seed=5))
    assert again == holed
    tri = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    with pytest.raises(EmptyAfterHoles):
        punch_holes(tri, ScanConfig(hole_count=(50, 50), hole_radius=(0.2, 0.2)))


def test_external_reconstruction(tmp_path):
    script = tmp_path / "hull.py"
    script.write_text(
        "import sys\n"
        "from scipy.spatial import ConvexHull\n"
        "from cadloop.mesh import clean_triangles\n"
        "from cadloop.mesh_io import load_ply_points, save_mesh\n"
        "p, n = load_ply_points(sys.argv[1])\n"
        "save_mesh(clean_triangles(p, ConvexHull(p).simplices), sys.argv[2])\n"
    )
    pos, nrm, _ = sample_surface_arrays(box_mesh((0, 0, 0), (1, 1, 1)), 500, 0)
    m = reconstruct_surface(pos, nrm, external_command=f"{sys.executable} {script} {{input}} {{output}}")
    assert m.n_triangles > 0
    with pytest.raises(ExternalToolError):
        reconstruct_surface(pos, nrm, external_command=f"{sys.executable} -c 'raise SystemExit(4)'")


def test_config_from_mapping():
    cfg = ScanConfig.from_mapping({"n_points": "5000", "hole_count": [0, 2], "external_command": "none"})
    assert cfg.n_points == 5000 and cfg.hole_count == (0, 2) and cfg.external_command is None
    assert "hpr_radius_factor" in scan_config_keys()
    with pytest.raises((ValueError, TypeError)):
        ScanConfig(hole_count=(3, 1))
