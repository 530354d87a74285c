"""Wavefront OBJ subset plus JSON sidecars for landmark tags and landmark sets."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import MeshFormatError
from .geometry import TriangleMesh, compute_vertex_normals, normalize_rows


def _index(token: str, count: int, lineno: int) -> int:
    i = int(token)
    # OBJ indices are 1-based; negatives count back from the end
    i = i - 1 if i > 0 else count + i
    if not 0 <= i < count:
        raise MeshFormatError(f"line {lineno}: index {token} out of range")
    return i


def parse_obj(text: str, landmark_tags: dict | None = None) -> TriangleMesh:
    """Parse ``v``/``vn``/``f`` records.

    Faces must be triangles written as ``f v``, ``f v//vn`` or ``f v/vt/vn``.
    When any face lacks normal references, all vertex normals are recomputed
    by area-weighted averaging.
    """
    verts: list[list[float]] = []
    norms: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    face_norms: list[tuple[int, int, int] | None] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag, args = parts[0], parts[1:]
        try:
            if tag == "v":
                verts.append([float(a) for a in args[:3]])
                if len(args) < 3:
                    raise MeshFormatError(f"line {lineno}: vertex needs 3 coordinates")
            elif tag == "vn":
                if len(args) < 3:
                    raise MeshFormatError(f"line {lineno}: normal needs 3 components")
                norms.append([float(a) for a in args[:3]])
            elif tag == "f":
                if len(args) != 3:
                    raise MeshFormatError(f"line {lineno}: only triangular faces are supported")
                vi, ni = [], []
                for a in args:
                    fields = a.split("/")
                    vi.append(_index(fields[0], len(verts), lineno))
                    if len(fields) == 3 and fields[2]:
                        ni.append(_index(fields[2], len(norms), lineno))
                tris.append(tuple(vi))
                face_norms.append(tuple(ni) if len(ni) == 3 else None)
        except ValueError as exc:
            raise MeshFormatError(f"line {lineno}: {exc}") from None
    if not verts:
        raise MeshFormatError("no vertices found")
    vertices = np.array(verts, dtype=float)
    triangles = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if face_norms and all(fn is not None for fn in face_norms):
        normals = np.zeros_like(vertices)
        seen = np.zeros(len(vertices), dtype=bool)
        nrm = np.array(norms, dtype=float)
        for tri, fn in zip(tris, face_norms):
            for v, n in zip(tri, fn):
                if not seen[v]:
                    normals[v] = nrm[n]
                    seen[v] = True
        if not seen.all():
            fallback = compute_vertex_normals(vertices, triangles)
            normals[~seen] = fallback[~seen]
        normals = normalize_rows(normals)
    else:
        normals = compute_vertex_normals(vertices, triangles)
    return TriangleMesh(vertices, normals, triangles, landmark_tags or {})


def load_obj(path, tags_path=None) -> TriangleMesh:
    tags = load_landmark_tags(tags_path) if tags_path else None
    return parse_obj(Path(path).read_text(), tags)


def format_obj(mesh: TriangleMesh) -> str:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"vn {x!r} {y!r} {z!r}" for x, y, z in mesh.vertex_normals.tolist()]
    lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def save_obj(mesh: TriangleMesh, path, tags_path=None) -> None:
    Path(path).write_text(format_obj(mesh))
    if tags_path is not None:
        save_landmark_tags(mesh.landmark_tags, tags_path)


def load_landmark_tags(path) -> dict[str, int]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise MeshFormatError(f"{path}: landmark tags must be a name -> vertex index map")
    return {str(k): int(v) for k, v in data.items()}


def save_landmark_tags(tags, path) -> None:
    Path(path).write_text(json.dumps(dict(sorted(tags.items())), indent=2) + "\n")


def load_landmarks(path) -> dict[str, tuple[float, float]]:
    """Read a ``{name: [u, v]}`` document."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise MeshFormatError(f"{path}: landmarks must be a name -> [u, v] map")
    out = {}
    for k, v in data.items():
        if len(v) != 2:
            raise MeshFormatError(f"{path}: landmark {k!r} must have two coordinates")
        out[str(k)] = (float(v[0]), float(v[1]))
    return out


def save_landmarks(points, path) -> None:
    Path(path).write_text(json.dumps({k: [float(u), float(v)] for k, (u, v) in points.items()}, indent=2) + "\n")
