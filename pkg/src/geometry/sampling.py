"""
Surface sampling and the chamfer-distance metric used for evaluation.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.geometry.mesh import TriangleMesh
from src.utils.errors import GeometryError, ParameterError


def sample_surface_faces(mesh: TriangleMesh, n: int,
                         rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Area-weighted uniform surface samples and the face each one lies on."""
    if n <= 0:
        raise ParameterError(f"sample count must be positive, got {n}")
    areas = mesh.face_areas
    total = float(areas.sum())
    if not total > 0:
        raise GeometryError("cannot sample a mesh with zero surface area")
    faces = rng.choice(mesh.face_count, size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    w0 = 1.0 - s
    w1 = s * (1.0 - r2)
    w2 = s * r2
    a, b, c = (mesh.vertices[mesh.faces[faces, k]] for k in range(3))
    points = w0[:, None] * a + w1[:, None] * b + w2[:, None] * c
    return points, faces


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """n points (n, 3) spread uniformly by area; identical for a fixed seed."""
    points, _ = sample_surface_faces(mesh, n, np.random.default_rng(seed))
    return points


def chamfer_distance(a, b) -> float:
    """Symmetric chamfer: half the sum of both mean nearest-neighbor distances."""
    pa = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    pb = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(pa) == 0 or len(pb) == 0:
        raise ParameterError("chamfer distance needs two nonempty point sets")
    d_ab, _ = cKDTree(pb).query(pa, k=1)
    d_ba, _ = cKDTree(pa).query(pb, k=1)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))
