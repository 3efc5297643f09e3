"""
Simulated touch.

The sensor is driven along the estimated normal of the candidate, from
point + d*n down to point - d*n, and stops at the first crossing with the
truth surface. The attempt fails when

  - nothing is crossed within the travel window (no_intersection),
  - the real surface is farther than failure_threshold from the predicted
    point (threshold_exceeded), or
  - the contact lands outside the sensing pad (pad_miss).

Where the contact lands on the pad depends on how wrong the prediction was:
a random offset in the pad disk scaled by error / failure_threshold, plus a
shift of dome_radius * sin(tilt) toward the real surface normal when the
probe axis and the real normal disagree. The sensor reports the contact at
its pad center, so the recorded attractor is the hit minus that offset.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from src.geometry.mesh import TriangleMesh
from src.geometry.queries import interpolated_normal, segment_intersect
from src.sensing.tactile import ContactReading, simulate_reading
from src.utils.config import SessionConfig
from src.utils.errors import PadMissError, ParameterError


class ProbeOutcome(str, Enum):
    CONTACT = "contact"
    FAILURE = "failure"


class FailureReason(str, Enum):
    NO_INTERSECTION = "no_intersection"
    THRESHOLD_EXCEEDED = "threshold_exceeded"
    PAD_MISS = "pad_miss"


@dataclass(frozen=True, eq=False)
class ProbeResult:
    outcome: ProbeOutcome
    contact_point: Optional[np.ndarray] = None
    reading: Optional[ContactReading] = None
    failure_reason: Optional[FailureReason] = None
    attractor_position: Optional[np.ndarray] = None
    prediction_error: Optional[float] = None
    pad_offset: Optional[np.ndarray] = None

    @property
    def is_contact(self) -> bool:
        return self.outcome is ProbeOutcome.CONTACT


def _failure(reason: FailureReason, hit=None, error=None, offset=None) -> ProbeResult:
    return ProbeResult(ProbeOutcome.FAILURE, contact_point=hit, failure_reason=reason,
                       prediction_error=error, pad_offset=offset)


def pad_frame(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the pad plane perpendicular to `axis`."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def unit_disk_sample(rng: np.random.Generator) -> np.ndarray:
    r = np.sqrt(rng.random())
    phi = 2.0 * np.pi * rng.random()
    return np.array([r * np.cos(phi), r * np.sin(phi)])


def probe_rng(cfg: SessionConfig, iteration: int) -> np.random.Generator:
    """Per-attempt stream: same seed and iteration give the same noise."""
    return np.random.default_rng([cfg.sensor.offset_noise_seed, iteration])


def simulate_probe(truth: TriangleMesh, pose, cfg: SessionConfig,
                   rng: Optional[np.random.Generator] = None) -> ProbeResult:
    point = np.asarray(pose[0], dtype=np.float64).reshape(3)
    normal = np.asarray(pose[1], dtype=np.float64).reshape(3)
    length = float(np.linalg.norm(normal))
    if abs(length - 1.0) > 1e-6:
        raise ParameterError(f"probe normal must be unit length, got norm {length}")
    if rng is None:
        rng = probe_rng(cfg, 0)
    disk = unit_disk_sample(rng)

    d = cfg.probe_travel_d
    hit = segment_intersect(truth, point + d * normal, point - d * normal)
    if hit is None:
        return _failure(FailureReason.NO_INTERSECTION)

    error = float(np.linalg.norm(hit.point - point))
    if error > cfg.failure_threshold:
        return _failure(FailureReason.THRESHOLD_EXCEEDED, hit.point, error)

    sensor = cfg.sensor
    e1, e2 = pad_frame(normal)
    offset = (error / cfg.failure_threshold) * sensor.pad_radius * disk

    real_normal = interpolated_normal(truth, hit.face_index, hit.point)
    tilt = float(np.arccos(np.clip(real_normal @ normal, -1.0, 1.0)))
    lean = np.array([real_normal @ e1, real_normal @ e2])
    lean_norm = float(np.linalg.norm(lean))
    if lean_norm > 0:
        offset = offset + sensor.dome_radius * np.sin(tilt) * lean / lean_norm

    try:
        reading = simulate_reading(offset, sensor)
    except PadMissError:
        return _failure(FailureReason.PAD_MISS, hit.point, error, offset)

    return ProbeResult(
        outcome=ProbeOutcome.CONTACT,
        contact_point=hit.point,
        reading=reading,
        attractor_position=hit.point - offset[0] * e1 - offset[1] * e2,
        prediction_error=error,
        pad_offset=offset,
    )
