from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadloop.mesh import TriangleMesh, box_mesh
from cadloop.views import (
    DEFAULT_ORDER,
    DepthImage,
    DimensionMismatch,
    DuplicateView,
    MissingView,
    OutOfDomain,
    ViewConfig,
    assemble_grid,
    compose_overlay,
    encode_views,
    load_png,
    mirror_if_needed,
    render_depth_view,
)

from .fixtures.golden_views import GOLDEN_OVERLAY, fixture_target, render_overlay


def cube40():
    return box_mesh((-20, -20, -20), (20, 20, 20))


def test_cube_footprint_and_depth():
    img = render_depth_view(cube40(), "+Z").intensity
    assert img.shape == (238, 238)
    rows, cols = np.nonzero(img)
    assert rows.max() - rows.min() + 1 == 48 and cols.max() - cols.min() + 1 == 48
    assert np.allclose(img[img > 0], 0.6)  # face at z=+20
    assert np.all(img[img == 0] == 0)


def test_frontmost_surface_wins():
    front = box_mesh((-10, -10, 30), (10, 10, 40))
    back = box_mesh((-30, -30, -40), (30, 30, -20))
    both = TriangleMesh(
        np.vstack([front.vertices, back.vertices]), np.vstack([front.triangles, back.triangles + 8])
    )
    img = render_depth_view(both, "+Z").intensity
    assert img[119, 119] == pytest.approx(0.7)
    assert img[119, 90] == pytest.approx(0.4)


def test_rendering_is_deterministic_and_order_invariant(box_render):
    a = render_depth_view(box_render, "ISO1").intensity
    b = render_depth_view(box_render, "ISO1").intensity
    assert np.array_equal(a, b)
    perm = np.random.default_rng(0).permutation(box_render.n_triangles)
    shuffled = TriangleMesh(box_render.vertices, box_render.triangles[perm])
    assert np.array_equal(render_depth_view(shuffled, "ISO1").intensity, a)


def test_out_of_domain():
    with pytest.raises(OutOfDomain):
        render_depth_view(box_mesh((0, 0, 0), (102, 1, 1)), "+X")
    render_depth_view(box_mesh((0, 0, 0), (100.5, 1, 1)), "+X")


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(DEFAULT_ORDER[:6]), st.floats(1, 30))
def test_moving_toward_camera_brightens(tag, shift):
    axis = "XYZ".index(tag[1])
    sign = 1.0 if tag[0] == "+" else -1.0
    m = box_mesh((-20, -15, -10), (20, 15, 10))
    delta = np.zeros(3)
    delta[axis] = sign * shift
    a = render_depth_view(m, tag).intensity
    b = render_depth_view(m.translated(delta), tag).intensity
    # compare pixels that are covered both times
    both = (a > 0) & (b > 0)
    assert both.any() and np.all(b[both] > a[both])


def test_mirroring():
    img = np.zeros((238, 238))
    img[5, 10] = 1.0
    m = mirror_if_needed(DepthImage("+X", img))
    assert m.intensity[5, 227] == 1.0
    assert mirror_if_needed(DepthImage("-X", img)).intensity is img
    for tag in ("-Z", "+Y", "+X"):
        twice = mirror_if_needed(mirror_if_needed(DepthImage(tag, img)))
        assert np.array_equal(twice.intensity, img)


def _tiles():
    return [DepthImage(t, np.full((238, 238), (i + 1) / 10)) for i, t in enumerate(DEFAULT_ORDER)]


def test_grid_placement():
    grid = assemble_grid(_tiles())
    assert grid.shape == (952, 476)
    for i, _ in enumerate(DEFAULT_ORDER):
        r, c = divmod(i, 2)
        tile = grid[r * 238 : (r + 1) * 238, c * 238 : (c + 1) * 238]
        assert np.all(tile == (i + 1) / 10)


def test_grid_errors():
    tiles = _tiles()
    with pytest.raises(MissingView):
        assemble_grid(tiles[:7])
    with pytest.raises(DuplicateView):
        assemble_grid(tiles + [tiles[0]])
    with pytest.raises(ValueError):
        ViewConfig(order=("+X",) * 8)


def test_overlay_channels():
    t = np.full((952, 476), 0.8)
    o = compose_overlay(t, t)
    assert np.allclose(o.rgb[0, 0], (0.8, 0.8, 0.0))
    first = compose_overlay(np.full((952, 476), 0.5))
    assert np.all(first.red == 0) and np.all(first.green == 0.5) and np.all(first.blue == 0)
    with pytest.raises(DimensionMismatch):
        compose_overlay(t, np.zeros((10, 10)))


def test_overlay_channel_separation():
    g1 = encode_views(fixture_target())
    g2 = encode_views(cube40())
    a = compose_overlay(g1, g2)
    b = compose_overlay(g1, np.zeros_like(g2))
    assert np.array_equal(a.green, b.green)
    assert np.array_equal(compose_overlay(g2, g2).red, a.red)


def test_golden_overlay(tmp_path):
    frozen = load_png(GOLDEN_OVERLAY)
    assert np.array_equal(render_overlay().to_uint8(), frozen)
    out = tmp_path / "o.png"
    render_overlay().save_png(out)
    assert np.array_equal(load_png(out), frozen)
