"""
Single-view visual prior.

A fixed camera sees only part of the object. The camera sits behind the
object's centroid along `view_direction` (at camera_distance_factor bounding
radii); a surface point is visible when its outward face normal points back
toward the camera (normal . view < 0) and it lies inside the cone of
`cone_half_angle` around the ray from the camera through the centroid.
Occlusion is not modeled.

For a sphere seen from the default three radii, the default cone of 0.266 rad
reaches the points 36.9 degrees off the near pole, a cap of 10% of the
surface; 0.3 rad would already give about 15%.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.geometry.mesh import TriangleMesh
from src.geometry.sampling import sample_surface_faces
from src.sensing.attractors import Attractor, AttractorSource
from src.utils.errors import EmptyPriorError, ParameterError

MAX_REJECTION_ROUNDS = 200


@dataclass(frozen=True)
class VisualPriorConfig:
    view_direction: Tuple[float, float, float] = (-1.0, 0.0, 0.0)
    cone_half_angle: float = 0.266
    n_points: int = 50
    position_noise_sigma: float = 0.001
    visual_uncertainty: float = 0.4
    seed: int = 0
    camera_distance_factor: float = 3.0

    def __post_init__(self) -> None:
        v = np.asarray(self.view_direction, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(v))
        if not norm > 0:
            raise ParameterError("view_direction must be nonzero")
        if abs(norm - 1.0) > 1e-12:
            v = v / norm
        object.__setattr__(self, "view_direction", tuple(float(x) for x in v))
        if not 0.0 < self.cone_half_angle < np.pi / 2:
            raise ParameterError(f"cone_half_angle must be in (0, pi/2), got {self.cone_half_angle}")
        if self.n_points <= 0:
            raise ParameterError(f"n_points must be positive, got {self.n_points}")
        if self.position_noise_sigma < 0:
            raise ParameterError("position_noise_sigma must be >= 0")
        if not 0.0 <= self.visual_uncertainty <= 1.0:
            raise ParameterError("visual_uncertainty must be in [0, 1]")
        if not self.camera_distance_factor > 1.0:
            raise ParameterError("camera_distance_factor must be > 1 (camera outside the object)")


def camera_position(truth: TriangleMesh, cfg: VisualPriorConfig) -> np.ndarray:
    view = np.asarray(cfg.view_direction)
    return truth.centroid - cfg.camera_distance_factor * truth.bounding_radius * view


def visible_mask(points: np.ndarray, normals: np.ndarray, camera: np.ndarray,
                 cfg: VisualPriorConfig) -> np.ndarray:
    """Facing-the-camera and inside-the-cone test per point."""
    view = np.asarray(cfg.view_direction)
    facing = normals @ view < 0
    rays = points - camera
    dist = np.linalg.norm(rays, axis=1)
    cos_angle = np.divide(rays @ view, dist, out=np.zeros(len(points)), where=dist > 0)
    in_cone = cos_angle >= np.cos(cfg.cone_half_angle)
    return facing & in_cone


def visible_area_fraction(truth: TriangleMesh, cfg: VisualPriorConfig) -> float:
    """Share of the surface area whose face centroids pass the visibility test."""
    a, b, c = truth.corners
    mask = visible_mask((a + b + c) / 3.0, truth.face_normals, camera_position(truth, cfg), cfg)
    return float(truth.face_areas[mask].sum() / truth.face_areas.sum())


def sample_visual_prior(truth: TriangleMesh, cfg: VisualPriorConfig) -> List[Attractor]:
    """n_points noisy visual attractors on the visible part of the truth surface."""
    camera = camera_position(truth, cfg)
    view = np.asarray(cfg.view_direction)
    # only faces turned toward the camera can hold visible points
    eligible = np.flatnonzero(truth.face_normals @ view < 0)
    if len(eligible) == 0:
        raise EmptyPriorError("no truth face turned toward the camera")

    sub = TriangleMesh(truth.vertices, truth.faces[eligible])
    rng = np.random.default_rng(cfg.seed)
    kept: List[np.ndarray] = []
    n_kept = 0
    batch = max(4 * cfg.n_points, 256)
    for _ in range(MAX_REJECTION_ROUNDS):
        points, faces = sample_surface_faces(sub, batch, rng)
        mask = visible_mask(points, sub.face_normals[faces], camera, cfg)
        kept.append(points[mask])
        n_kept += int(mask.sum())
        if n_kept >= cfg.n_points:
            break
    else:
        if n_kept == 0:
            raise EmptyPriorError("no visible truth surface inside the camera cone")
        raise EmptyPriorError(
            f"visible region too small: {n_kept} of {cfg.n_points} points after "
            f"{MAX_REJECTION_ROUNDS} sampling rounds"
        )

    positions = np.concatenate(kept)[: cfg.n_points]
    if cfg.position_noise_sigma > 0:
        positions = positions + rng.normal(0.0, cfg.position_noise_sigma, size=positions.shape)
    return [
        Attractor(position=p, uncertainty=cfg.visual_uncertainty, source=AttractorSource.VISUAL)
        for p in positions
    ]
