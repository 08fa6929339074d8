"""Reading and writing OBJ, STL (binary and ASCII) and ASCII PLY meshes."""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .mesh import MalformedGeometry, TriangleMesh, UnsupportedFormat, clean_triangles

_STL_HEADER = b"cadloop binary STL".ljust(80, b"\0")


def load_mesh(path: str | os.PathLike) -> TriangleMesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    data = path.read_bytes()
    if not data.strip():
        raise MalformedGeometry(f"{path} is empty")
    try:
        if suffix == ".obj":
            v, t = _parse_obj(data.decode("utf-8", errors="replace"))
        elif suffix == ".stl":
            v, t = _parse_stl(data)
        elif suffix == ".ply":
            v, t, _ = _parse_ply(data)
        else:
            raise UnsupportedFormat(f"unsupported mesh format {suffix!r}")
    except (ValueError, IndexError, struct.error) as exc:
        if isinstance(exc, (UnsupportedFormat, MalformedGeometry)):
            raise
        raise MalformedGeometry(f"{path}: {exc}") from exc
    if len(t) == 0:
        raise MalformedGeometry(f"{path} has no triangles")
    if not np.all(np.isfinite(v)):
        raise MalformedGeometry(f"{path} has non-finite coordinates")
    return clean_triangles(v, t)


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                tris.append((idx[0], idx[k], idx[k + 1]))
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3)


def _weld(corners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge bit-identical corner positions of a triangle soup."""
    flat = corners.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1, 3)


def _parse_stl(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            rec = np.frombuffer(
                data,
                dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]),
                count=count,
                offset=84,
            )
            return _weld(rec["v"].astype(np.float64))
    text = data.decode("ascii", errors="replace")
    if not text.lstrip().startswith("solid"):
        raise MalformedGeometry("not a binary or ASCII STL")
    pts = [
        [float(x) for x in line.split()[1:4]]
        for line in text.splitlines()
        if line.strip().startswith("vertex")
    ]
    if len(pts) % 3:
        raise MalformedGeometry("ASCII STL vertex count is not a multiple of 3")
    return _weld(np.array(pts, dtype=np.float64).reshape(-1, 3, 3))


def _parse_ply(data: bytes) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    text = data.decode("ascii", errors="replace")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedGeometry("missing ply magic")
    n_vert = n_face = 0
    props: list[str] = []
    current = None
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format" and parts[1] != "ascii":
            raise UnsupportedFormat("only ASCII PLY is supported")
        if parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vert = int(parts[2])
            elif current == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            props.append(parts[-1])
        elif parts[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None:
        raise MalformedGeometry("PLY header not terminated")
    body = lines[body_start:]
    vrows = np.array([[float(x) for x in body[k].split()] for k in range(n_vert)], dtype=np.float64)
    vrows = vrows.reshape(n_vert, len(props))
    xyz = vrows[:, [props.index(a) for a in ("x", "y", "z")]]
    normals = None
    if all(a in props for a in ("nx", "ny", "nz")):
        normals = vrows[:, [props.index(a) for a in ("nx", "ny", "nz")]]
    tris: list[tuple[int, int, int]] = []
    for k in range(n_face):
        vals = [int(x) for x in body[n_vert + k].split()]
        idx = vals[1 : 1 + vals[0]]
        for j in range(1, len(idx) - 1):
            tris.append((idx[0], idx[j], idx[j + 1]))
    return xyz, np.array(tris, dtype=np.int64).reshape(-1, 3), normals


def load_ply_points(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray | None]:
    """Vertex positions (and normals, when present) of a PLY point set."""
    xyz, _, normals = _parse_ply(Path(path).read_bytes())
    return xyz, normals


def save_mesh(mesh: TriangleMesh, path: str | os.PathLike, *, ascii_stl: bool = False) -> Path:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        path.write_text(_format_obj(mesh), encoding="utf-8")
    elif suffix == ".stl":
        path.write_bytes(_format_stl_ascii(mesh).encode("ascii") if ascii_stl else _format_stl_binary(mesh))
    elif suffix == ".ply":
        path.write_text(_format_ply(mesh.vertices, mesh.triangles), encoding="ascii")
    else:
        raise UnsupportedFormat(f"unsupported mesh format {suffix!r}")
    return path


def _format_obj(mesh: TriangleMesh) -> str:
    out = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    out += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    return "\n".join(out) + "\n"


def _format_stl_binary(mesh: TriangleMesh) -> bytes:
    rec = np.zeros(
        mesh.n_triangles, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    )
    rec["n"] = mesh.face_normals
    rec["v"] = mesh.corners
    return _STL_HEADER + struct.pack("<I", mesh.n_triangles) + rec.tobytes()


def _format_stl_ascii(mesh: TriangleMesh) -> str:
    out = ["solid cadloop"]
    for n, tri in zip(mesh.face_normals.astype(np.float32), mesh.corners.astype(np.float32)):
        out.append("  facet normal {:.9g} {:.9g} {:.9g}".format(*n))
        out.append("    outer loop")
        out += ["      vertex {:.9g} {:.9g} {:.9g}".format(*p) for p in tri]
        out.append("    endloop")
        out.append("  endfacet")
    out.append("endsolid cadloop")
    return "\n".join(out) + "\n"


def _format_ply(vertices: np.ndarray, triangles: np.ndarray | None, normals: np.ndarray | None = None) -> str:
    header = ["ply", "format ascii 1.0", f"element vertex {len(vertices)}"]
    header += ["property double x", "property double y", "property double z"]
    if normals is not None:
        header += ["property double nx", "property double ny", "property double nz"]
    n_faces = 0 if triangles is None else len(triangles)
    header += [f"element face {n_faces}", "property list uchar int vertex_indices", "end_header"]
    rows = vertices if normals is None else np.hstack([vertices, normals])
    body = [" ".join(repr(float(x)) for x in r) for r in rows.tolist()]
    if triangles is not None:
        body += [f"3 {a} {b} {c}" for a, b, c in triangles.tolist()]
    return "\n".join(header + body) + "\n"


def save_ply_points(points: np.ndarray, normals: np.ndarray, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_text(_format_ply(np.asarray(points, float), None, np.asarray(normals, float)), encoding="ascii")
    return path
