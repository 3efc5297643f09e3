"""
Mesh file I/O: ASCII OBJ in and out, ASCII PLY snapshots colored by
uncertainty, and the per-vertex field CSV.

OBJ support is deliberately narrow: `v` and `f` records only. Face tokens may
carry texture/normal references (`f 1/2/3 ...`), negative indices are
resolved relative to the end, and polygons are fan-triangulated.
"""

from __future__ import annotations

import csv
import os
from typing import Optional

import numpy as np

from src.geometry.mesh import TriangleMesh
from src.utils.errors import GeometryError, SessionIOError


def _parse_face_index(token: str, n_vertices: int) -> int:
    idx = int(token.split("/")[0])
    if idx < 0:
        return n_vertices + idx
    return idx - 1


def load_obj(path: str) -> TriangleMesh:
    """Read an OBJ file into a TriangleMesh (not validated; see load_mesh)."""
    vertices = []
    faces = []
    try:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "v":
                    if len(parts) < 4:
                        raise GeometryError(f"{path}:{line_no}: vertex with fewer than 3 coordinates")
                    try:
                        vertices.append([float(x) for x in parts[1:4]])
                    except ValueError as e:
                        raise GeometryError(f"{path}:{line_no}: bad vertex record") from e
                elif parts[0] == "f":
                    try:
                        poly = [_parse_face_index(t, len(vertices)) for t in parts[1:]]
                    except ValueError as e:
                        raise GeometryError(f"{path}:{line_no}: bad face record") from e
                    if len(poly) < 3:
                        raise GeometryError(f"{path}:{line_no}: face with fewer than 3 vertices")
                    for k in range(1, len(poly) - 1):
                        faces.append([poly[0], poly[k], poly[k + 1]])
    except OSError as e:
        raise SessionIOError(f"cannot read mesh {path}: {e}") from e
    if not vertices or not faces:
        raise GeometryError(f"{path}: no vertices or faces")
    return TriangleMesh(np.array(vertices), np.array(faces))


def load_mesh(path: str) -> TriangleMesh:
    """Load and validate a truth mesh (connected edge graph, nonzero area)."""
    mesh = load_obj(path)
    mesh.validate()
    return mesh


def save_obj(path: str, mesh: TriangleMesh) -> None:
    try:
        _ensure_parent(path)
        with open(path, "w", encoding="utf-8") as f:
            for v in mesh.vertices:
                f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
            for a, b, c in mesh.faces:
                f.write(f"f {a + 1} {b + 1} {c + 1}\n")
    except OSError as e:
        raise SessionIOError(f"cannot write mesh {path}: {e}") from e


def uncertainty_colors(values: np.ndarray) -> np.ndarray:
    """Red for 1, green for 0, linear in between; (N, 3) uint8."""
    u = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([u, 1.0 - u, np.zeros_like(u)], axis=1)
    return np.rint(rgb * 255.0).astype(np.uint8)


def save_ply(path: str, mesh: TriangleMesh, uncertainty: Optional[np.ndarray] = None) -> None:
    """ASCII PLY with normals and, if given, an `uncertainty` scalar plus its color."""
    has_u = uncertainty is not None
    if has_u:
        uncertainty = np.asarray(uncertainty, dtype=np.float64)
        if len(uncertainty) != mesh.vertex_count:
            raise GeometryError("uncertainty field does not match vertex count")
        colors = uncertainty_colors(uncertainty)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.vertex_count}",
        "property float x",
        "property float y",
        "property float z",
        "property float nx",
        "property float ny",
        "property float nz",
    ]
    if has_u:
        header += [
            "property float uncertainty",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    header += [f"element face {mesh.face_count}", "property list uchar int vertex_indices", "end_header"]
    try:
        _ensure_parent(path)
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(header) + "\n")
            for i in range(mesh.vertex_count):
                v = mesh.vertices[i]
                n = mesh.vertex_normals[i]
                row = f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g} {n[0]:.6g} {n[1]:.6g} {n[2]:.6g}"
                if has_u:
                    r, g, b = colors[i]
                    row += f" {uncertainty[i]:.6g} {r} {g} {b}"
                f.write(row + "\n")
            for a, b, c in mesh.faces:
                f.write(f"3 {a} {b} {c}\n")
    except OSError as e:
        raise SessionIOError(f"cannot write snapshot {path}: {e}") from e


def load_ply(path: str):
    """Read back an ASCII PLY written by save_ply: (mesh, uncertainty or None)."""
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise SessionIOError(f"cannot read snapshot {path}: {e}") from e
    if not lines or lines[0] != "ply":
        raise GeometryError(f"{path}: not a PLY file")
    n_vertices = n_faces = 0
    props = []
    end = 0
    for k, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n_vertices = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            n_faces = int(parts[2])
        elif parts and parts[0] == "property" and parts[1] != "list":
            props.append(parts[-1])
        elif line == "end_header":
            end = k + 1
            break
    body = lines[end:]
    table = np.array([[float(x) for x in row.split()] for row in body[:n_vertices]])
    faces = np.array([[int(x) for x in row.split()[1:4]] for row in body[n_vertices:n_vertices + n_faces]])
    col = {name: i for i, name in enumerate(props)}
    mesh = TriangleMesh(table[:, [col["x"], col["y"], col["z"]]], faces)
    u = table[:, col["uncertainty"]] if "uncertainty" in col else None
    return mesh, u


def write_field_csv(path: str, mesh: TriangleMesh, values: np.ndarray) -> None:
    """One row per vertex: vertex, x, y, z, uncertainty."""
    try:
        _ensure_parent(path)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=["vertex", "x", "y", "z", "uncertainty"])
            writer.writeheader()
            for i, (v, u) in enumerate(zip(mesh.vertices, values)):
                writer.writerow({"vertex": i, "x": f"{v[0]:.9g}", "y": f"{v[1]:.9g}",
                                 "z": f"{v[2]:.9g}", "uncertainty": f"{u:.6f}"})
    except OSError as e:
        raise SessionIOError(f"cannot write field csv {path}: {e}") from e


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
