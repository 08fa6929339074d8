"""Eight-view depth encoding and the green/red target-vs-prediction overlay.

Views use parallel projection of the [-100, 100]^3 modelling domain onto
238 x 238 pixels. Intensity is linear in depth: 1 at the near side of the
domain slab, 0 at the far side, and 0 for empty pixels. The six axis views
cover the domain square; the two isometric views cover a square of half-size
100*sqrt(3) so the whole domain stays in frame.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .mesh import TriangleMesh

VIEW_SIZE = 238
DOMAIN = 100.0
VIEW_TAGS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z", "ISO1", "ISO2")
MIRRORED_TAGS = frozenset({"-Z", "+Y", "+X"})
DEFAULT_ORDER = ("+X", "-X", "+Y", "-Y", "+Z", "-Z", "ISO1", "ISO2")
ISO_DIRECTIONS = ((1.0, 1.0, 1.0), (-1.0, -1.0, 1.0))
GRID_COLS, GRID_ROWS = 2, 4


class ViewError(ValueError):
    pass


class OutOfDomain(ViewError):
    pass


class MissingView(ViewError):
    pass


class DuplicateView(ViewError):
    pass


class DimensionMismatch(ViewError):
    pass


@dataclass(frozen=True)
class ViewConfig:
    order: tuple[str, ...] = DEFAULT_ORDER
    iso_directions: tuple[tuple[float, float, float], ...] = ISO_DIRECTIONS
    size: int = VIEW_SIZE

    def __post_init__(self) -> None:
        if sorted(self.order) != sorted(VIEW_TAGS):
            raise ValueError("view order must be a permutation of the eight view tags")


@dataclass(frozen=True)
class DepthImage:
    view_tag: str
    intensity: np.ndarray = field(repr=False)  # (H, W) in [0, 1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape  # type: ignore[return-value]


def _camera(tag: str, cfg: ViewConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """(toward_camera, right, up, half_extent) for a view tag."""
    axis_views = {
        "+X": ((1, 0, 0), (0, 0, 1)),
        "-X": ((-1, 0, 0), (0, 0, 1)),
        "+Y": ((0, 1, 0), (0, 0, 1)),
        "-Y": ((0, -1, 0), (0, 0, 1)),
        "+Z": ((0, 0, 1), (0, 1, 0)),
        "-Z": ((0, 0, -1), (0, 1, 0)),
    }
    if tag in axis_views:
        d, up = (np.array(x, dtype=np.float64) for x in axis_views[tag])
        half = DOMAIN
    elif tag in ("ISO1", "ISO2"):
        d = np.array(cfg.iso_directions[0 if tag == "ISO1" else 1], dtype=np.float64)
        d /= np.linalg.norm(d)
        z = np.array([0.0, 0.0, 1.0])
        up = z - d * (z @ d)
        up /= np.linalg.norm(up)
        half = DOMAIN * np.sqrt(3.0)
    else:
        raise ValueError(f"unknown view tag {tag!r}")
    forward = -d
    right = np.cross(forward, up)
    return d, right, up, half


def _rasterize_min_depth(x: np.ndarray, y: np.ndarray, z: np.ndarray, width: int, height: int) -> np.ndarray:
    """Per-pixel minimum of ``z`` over triangles given in pixel coordinates.

    Pixel centers sit at integer coordinates. A center on a shared edge belongs
    to exactly one of the two triangles (top-left style ownership).
    """
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (y[:, 1] - y[:, 0]) * (x[:, 2] - x[:, 0])
    keep = area2 != 0
    x, y, z, area2 = x[keep], y[keep], z[keep], area2[keep]
    flip = area2 < 0
    for arr in (x, y, z):
        arr[flip] = arr[flip][:, [0, 2, 1]]
    area2 = np.abs(area2)

    c0 = np.clip(np.ceil(x.min(axis=1)), 0, width).astype(np.int64)
    c1 = np.clip(np.floor(x.max(axis=1)), -1, width - 1).astype(np.int64)
    r0 = np.clip(np.ceil(y.min(axis=1)), 0, height).astype(np.int64)
    r1 = np.clip(np.floor(y.max(axis=1)), -1, height - 1).astype(np.int64)
    nc = np.maximum(c1 - c0 + 1, 0)
    nr = np.maximum(r1 - r0 + 1, 0)
    counts = nc * nr
    total = int(counts.sum())
    zbuf = np.full(width * height, np.inf)
    if total == 0:
        return zbuf.reshape(height, width)
    tri = np.repeat(np.arange(len(counts)), counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    px = c0[tri] + local % nc[tri]
    py = r0[tri] + local // nc[tri]
    fx = px.astype(np.float64)
    fy = py.astype(np.float64)
    tx, ty, tz = x[tri], y[tri], z[tri]
    inside = np.ones(total, dtype=bool)
    weights = []
    for e0, e1 in ((1, 2), (2, 0), (0, 1)):
        dx = tx[:, e1] - tx[:, e0]
        dy = ty[:, e1] - ty[:, e0]
        edge = dx * (fy - ty[:, e0]) - dy * (fx - tx[:, e0])
        own = (dy > 0) | ((dy == 0) & (dx < 0))
        inside &= (edge > 0) | ((edge == 0) & own)
        weights.append(edge)
    w = np.stack(weights, axis=1)[inside] / area2[tri][inside][:, None]
    tzi = tz[inside]
    depth = w[:, 0] * tzi[:, 0] + w[:, 1] * tzi[:, 1] + w[:, 2] * tzi[:, 2]
    flat = py[inside] * width + px[inside]
    np.minimum.at(zbuf, flat, depth)
    return zbuf.reshape(height, width)


def _dot(v: np.ndarray, axis: np.ndarray) -> np.ndarray:
    # explicit products keep golden images independent of the BLAS build
    return v[:, 0] * axis[0] + v[:, 1] * axis[1] + v[:, 2] * axis[2]


def render_depth_view(mesh: TriangleMesh, view_tag: str, cfg: ViewConfig | None = None) -> DepthImage:
    """Frontmost-surface depth image of a mesh in the prediction domain."""
    cfg = cfg or ViewConfig()
    v = mesh.vertices
    if np.any(np.abs(v) > DOMAIN * 1.01):
        raise OutOfDomain("mesh leaves the [-100, 100] domain by more than 1%")
    d, right, up, half = _camera(view_tag, cfg)
    size = cfg.size
    scale = size / (2.0 * half)
    px = (_dot(v, right) + half) * scale - 0.5
    py = (half - _dot(v, up)) * scale - 0.5
    dist = half - _dot(v, d)  # distance behind the near plane
    tri = mesh.triangles
    zbuf = _rasterize_min_depth(px[tri], py[tri], dist[tri], size, size)
    hit = np.isfinite(zbuf)
    intensity = np.zeros((size, size))
    intensity[hit] = np.clip(1.0 - zbuf[hit] / (2.0 * half), 0.0, 1.0)
    return DepthImage(view_tag, intensity)


def mirror_if_needed(img: DepthImage) -> DepthImage:
    if img.view_tag in MIRRORED_TAGS:
        return DepthImage(img.view_tag, img.intensity[:, ::-1].copy())
    return img


def assemble_grid(views: Sequence[DepthImage] | Mapping[str, DepthImage], cfg: ViewConfig | None = None) -> np.ndarray:
    """Tile eight views row-major into a (4 * size, 2 * size) image."""
    cfg = cfg or ViewConfig()
    items = list(views.values()) if isinstance(views, Mapping) else list(views)
    by_tag: dict[str, DepthImage] = {}
    for img in items:
        if img.view_tag in by_tag:
            raise DuplicateView(img.view_tag)
        by_tag[img.view_tag] = img
    missing = [t for t in cfg.order if t not in by_tag]
    if missing:
        raise MissingView(", ".join(missing))
    s = cfg.size
    grid = np.zeros((GRID_ROWS * s, GRID_COLS * s))
    for i, tag in enumerate(cfg.order):
        img = by_tag[tag].intensity
        if img.shape != (s, s):
            raise DimensionMismatch(f"{tag} view has shape {img.shape}")
        r, c = divmod(i, GRID_COLS)
        grid[r * s : (r + 1) * s, c * s : (c + 1) * s] = img
    return grid


def encode_views(mesh: TriangleMesh, cfg: ViewConfig | None = None) -> np.ndarray:
    """Render, mirror and tile all eight views of a mesh."""
    cfg = cfg or ViewConfig()
    return assemble_grid([mirror_if_needed(render_depth_view(mesh, t, cfg)) for t in cfg.order], cfg)


@dataclass(frozen=True)
class OverlayImage:
    rgb: np.ndarray = field(repr=False)  # (H, W, 3) floats in [0, 1]

    @property
    def red(self) -> np.ndarray:
        return self.rgb[..., 0]

    @property
    def green(self) -> np.ndarray:
        return self.rgb[..., 1]

    @property
    def blue(self) -> np.ndarray:
        return self.rgb[..., 2]

    def to_uint8(self) -> np.ndarray:
        return np.round(self.rgb * 255.0).astype(np.uint8)

    def to_png(self) -> bytes:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(self.to_uint8(), mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_png())


def compose_overlay(target_grid: np.ndarray, pred_grid: np.ndarray | None = None) -> OverlayImage:
    """Target intensities in green, prediction in red, blue left empty."""
    target_grid = np.asarray(target_grid, dtype=np.float64)
    if pred_grid is None:
        pred_grid = np.zeros_like(target_grid)
    pred_grid = np.asarray(pred_grid, dtype=np.float64)
    if pred_grid.shape != target_grid.shape:
        raise DimensionMismatch(f"{pred_grid.shape} vs {target_grid.shape}")
    rgb = np.stack([pred_grid, target_grid, np.zeros_like(target_grid)], axis=-1)
    return OverlayImage(rgb)


def load_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))
