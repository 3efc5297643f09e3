"""
Geometric queries against a TriangleMesh: closest point on the surface and
segment crossing.

Closest-point search is brute force (vectorized over all faces) for small
meshes and goes through a face BVH above BVH_FACE_THRESHOLD faces. Both paths
evaluate the same per-face kernel, so the BVH returns exactly what the brute
force would. Ties are resolved toward the lowest face index.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from src.geometry.mesh import TriangleMesh
from src.utils.errors import ParameterError

BVH_FACE_THRESHOLD = 1000
BVH_LEAF_SIZE = 8


@dataclass(frozen=True)
class SurfaceProjection:
    point: np.ndarray
    face_index: int
    normal: np.ndarray
    distance: float


class SegmentHit(NamedTuple):
    point: np.ndarray
    face_index: int
    parameter: float


def _dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # elementwise so results do not depend on array length or alignment
    return x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] + x[..., 2] * y[..., 2]


def closest_barycentrics(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (M, 3) of the closest point of each triangle to p.

    Region classification follows the Voronoi-region walk of Ericson's
    closest-point-on-triangle routine.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    m = len(a)
    bary = np.zeros((m, 3))
    todo = np.ones(m, dtype=bool)

    def take(mask):
        sel = todo & mask
        todo[sel] = False
        return sel

    with np.errstate(divide="ignore", invalid="ignore"):
        sel = take((d1 <= 0) & (d2 <= 0))
        bary[sel, 0] = 1.0

        sel = take((d3 >= 0) & (d4 <= d3))
        bary[sel, 1] = 1.0

        sel = take((vc <= 0) & (d1 >= 0) & (d3 <= 0))
        v = d1[sel] / (d1[sel] - d3[sel])
        bary[sel, 0] = 1.0 - v
        bary[sel, 1] = v

        sel = take((d6 >= 0) & (d5 <= d6))
        bary[sel, 2] = 1.0

        sel = take((vb <= 0) & (d2 >= 0) & (d6 <= 0))
        w = d2[sel] / (d2[sel] - d6[sel])
        bary[sel, 0] = 1.0 - w
        bary[sel, 2] = w

        sel = take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0))
        w = (d4[sel] - d3[sel]) / ((d4[sel] - d3[sel]) + (d5[sel] - d6[sel]))
        bary[sel, 1] = 1.0 - w
        bary[sel, 2] = w

        sel = todo
        denom = va[sel] + vb[sel] + vc[sel]
        v = vb[sel] / denom
        w = vc[sel] / denom
        bary[sel, 0] = 1.0 - v - w
        bary[sel, 1] = v
        bary[sel, 2] = w

    # zero-area faces produce nan; fall back to their first corner
    bad = ~np.isfinite(bary).all(axis=1)
    if bad.any():
        bary[bad] = (1.0, 0.0, 0.0)
    return bary


def closest_points_on_faces(mesh: TriangleMesh, query: np.ndarray, face_ids: np.ndarray):
    """Closest points (K, 3) and squared distances (K,) for a subset of faces."""
    f = mesh.faces[face_ids]
    a = mesh.vertices[f[:, 0]]
    b = mesh.vertices[f[:, 1]]
    c = mesh.vertices[f[:, 2]]
    bary = closest_barycentrics(query, a, b, c)
    pts = bary[:, 0:1] * a + bary[:, 1:2] * b + bary[:, 2:3] * c
    diff = pts - query
    return pts, _dot(diff, diff)


class FaceBVH:
    """Axis-aligned bounding-volume hierarchy over mesh faces.

    Built top-down by median split of face centroids along the widest axis.
    Queries are best-first: nodes are visited in order of their box distance
    and the walk stops once no box can beat the current best.
    """

    def __init__(self, mesh: TriangleMesh, leaf_size: int = BVH_LEAF_SIZE):
        self.mesh = mesh
        a, b, c = mesh.corners
        face_lo = np.minimum(np.minimum(a, b), c)
        face_hi = np.maximum(np.maximum(a, b), c)
        centroids = (a + b + c) / 3.0

        self.lo: List[np.ndarray] = []
        self.hi: List[np.ndarray] = []
        self.children: List[Optional[Tuple[int, int]]] = []
        self.leaf_faces: List[Optional[np.ndarray]] = []

        def build(ids: np.ndarray) -> int:
            node = len(self.lo)
            self.lo.append(face_lo[ids].min(axis=0))
            self.hi.append(face_hi[ids].max(axis=0))
            self.children.append(None)
            self.leaf_faces.append(None)
            if len(ids) <= leaf_size:
                self.leaf_faces[node] = np.sort(ids)
                return node
            cen = centroids[ids]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            order = ids[np.argsort(cen[:, axis], kind="stable")]
            half = len(order) // 2
            left = build(order[:half])
            right = build(order[half:])
            self.children[node] = (left, right)
            return node

        self.root = build(np.arange(mesh.face_count))

    def _box_distance2(self, node: int, p: np.ndarray) -> float:
        d = np.maximum(np.maximum(self.lo[node] - p, 0.0), p - self.hi[node])
        return float(d @ d)

    def closest(self, query: np.ndarray) -> Tuple[int, np.ndarray, float]:
        """(face_index, point, squared distance) of the closest surface point."""
        best_d2 = np.inf
        best_face = -1
        best_point = None
        heap = [(self._box_distance2(self.root, query), self.root)]
        while heap:
            bound, node = heapq.heappop(heap)
            if bound > best_d2:
                break
            faces = self.leaf_faces[node]
            if faces is None:
                for child in self.children[node]:
                    cb = self._box_distance2(child, query)
                    if cb <= best_d2:
                        heapq.heappush(heap, (cb, child))
                continue
            pts, d2 = closest_points_on_faces(self.mesh, query, faces)
            k = int(np.argmin(d2))
            cand_d2 = float(d2[k])
            cand_face = int(faces[k])
            if cand_d2 < best_d2 or (cand_d2 == best_d2 and cand_face < best_face):
                best_d2, best_face, best_point = cand_d2, cand_face, pts[k]
        return best_face, best_point, best_d2


def _brute_force_closest(mesh: TriangleMesh, query: np.ndarray) -> Tuple[int, np.ndarray, float]:
    pts, d2 = closest_points_on_faces(mesh, query, np.arange(mesh.face_count))
    k = int(np.argmin(d2))
    return k, pts[k], float(d2[k])


def project_point(mesh: TriangleMesh, query) -> SurfaceProjection:
    """Closest point on the mesh surface to `query`, with the face it lies on."""
    q = np.asarray(query, dtype=np.float64).reshape(3)
    if mesh.face_count > BVH_FACE_THRESHOLD:
        bvh = mesh.memo("bvh", lambda: FaceBVH(mesh))
        face, point, _ = bvh.closest(q)
    else:
        face, point, _ = _brute_force_closest(mesh, q)
    point = np.array(point)
    return SurfaceProjection(
        point=point,
        face_index=face,
        normal=mesh.face_normals[face].copy(),
        distance=float(np.linalg.norm(q - point)),
    )


def interpolated_normal(mesh: TriangleMesh, face_index: int, point) -> np.ndarray:
    """Barycentric blend of the face's vertex normals at a point on that face."""
    f = mesh.faces[face_index]
    a, b, c = (mesh.vertices[f[k]][None, :] for k in range(3))
    bary = closest_barycentrics(np.asarray(point, dtype=np.float64).reshape(3), a, b, c)[0]
    n = bary @ mesh.vertex_normals[f]
    norm = float(np.linalg.norm(n))
    if norm == 0:
        return mesh.face_normals[face_index].copy()
    return n / norm


def segment_intersect(mesh: TriangleMesh, start, end) -> Optional[SegmentHit]:
    """First crossing of the segment start -> end with the mesh, or None.

    Uses the watertight ray/triangle test of Woop, Benthin and Wald: the
    segment direction is made the z axis by a permutation and shear, and the
    three edge functions are evaluated on the sheared corners. An edge shared
    by two faces yields exactly negated edge functions in both, so a segment
    through the edge is never missed by both faces.
    """
    org = np.asarray(start, dtype=np.float64).reshape(3)
    dst = np.asarray(end, dtype=np.float64).reshape(3)
    d = dst - org
    if not np.any(d):
        raise ParameterError("segment start and end coincide")

    kz = int(np.argmax(np.abs(d)))
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]

    a, b, c = mesh.corners
    A = a - org
    B = b - org
    C = c - org
    ax, ay = A[:, kx] - sx * A[:, kz], A[:, ky] - sy * A[:, kz]
    bx, by = B[:, kx] - sx * B[:, kz], B[:, ky] - sy * B[:, kz]
    cx, cy = C[:, kx] - sx * C[:, kz], C[:, ky] - sy * C[:, kz]

    U = cx * by - cy * bx
    V = ax * cy - ay * cx
    W = bx * ay - by * ax

    outside = ((U < 0) | (V < 0) | (W < 0)) & ((U > 0) | (V > 0) | (W > 0))
    det = U + V + W
    ok = ~outside & (det != 0)
    if not ok.any():
        return None

    T = U * (sz * A[:, kz]) + V * (sz * B[:, kz]) + W * (sz * C[:, kz])
    t = np.full(len(det), np.inf)
    t[ok] = T[ok] / det[ok]
    ok &= (t >= 0.0) & (t <= 1.0)
    if not ok.any():
        return None
    t[~ok] = np.inf
    face = int(np.argmin(t))
    inv = 1.0 / det[face]
    point = (U[face] * a[face] + V[face] * b[face] + W[face] * c[face]) * inv
    return SegmentHit(point=point, face_index=face, parameter=float(t[face]))
