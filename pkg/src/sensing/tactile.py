"""
Tactile sensor model.

A contact is read as a normal force and two torques about the pad axes. The
attractor uncertainty is

    u = u_max * (|Tx| + |Ty|) / (2 |Fz| + |Tx| + |Ty|)

which is zero for a contact held at the middle of the pad and reaches u_max
when the contact sits on its edge. The simulated reading is a rigid moment
arm: the nominal force applied at the in-pad offset of the contact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.sensing.attractors import Attractor, AttractorSource
from src.utils.errors import NoContactError, PadMissError, ParameterError


@dataclass(frozen=True)
class ContactReading:
    force_z: float
    torque_x: float
    torque_y: float

    def __post_init__(self) -> None:
        if self.force_z < 0:
            raise ParameterError(f"force_z must be >= 0 at contact, got {self.force_z}")

    @property
    def torque_sum(self) -> float:
        return abs(self.torque_x) + abs(self.torque_y)


@dataclass(frozen=True)
class SensorModel:
    """Sensor constants. Lengths in meters, force in newtons."""

    u_max: float = 0.5
    pad_radius: float = 0.009
    nominal_force: float = 5.0
    dome_radius: float = 0.0104
    offset_noise_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.u_max <= 1.0:
            raise ParameterError(f"u_max must be in (0, 1], got {self.u_max}")
        if not self.pad_radius > 0:
            raise ParameterError(f"pad_radius must be positive, got {self.pad_radius}")
        if not self.nominal_force > 0:
            raise ParameterError(f"nominal_force must be positive, got {self.nominal_force}")
        if self.dome_radius < 0:
            raise ParameterError(f"dome_radius must be >= 0, got {self.dome_radius}")


def attractor_uncertainty(reading: ContactReading, model: SensorModel) -> float:
    """Uncertainty in [0, u_max] of a tactile attractor from its reading."""
    torques = reading.torque_sum
    force = abs(reading.force_z)
    if force == 0 and torques == 0:
        raise NoContactError("reading has no force and no torque")
    return model.u_max * torques / (2.0 * force + torques)


def simulate_reading(contact_offset, model: SensorModel) -> ContactReading:
    """Reading for a contact at `contact_offset` (x, y) from the pad center."""
    offset = np.asarray(contact_offset, dtype=np.float64).reshape(2)
    r = float(np.hypot(offset[0], offset[1]))
    if r > model.pad_radius:
        raise PadMissError(
            f"contact {r * 1000:.2f} mm off center, pad radius {model.pad_radius * 1000:.2f} mm"
        )
    f = model.nominal_force
    return ContactReading(force_z=f, torque_x=f * float(offset[1]), torque_y=f * float(offset[0]))


def tactile_attractor(position, reading: ContactReading, model: SensorModel) -> Attractor:
    return Attractor(
        position=position,
        uncertainty=attractor_uncertainty(reading, model),
        source=AttractorSource.TACTILE,
    )
