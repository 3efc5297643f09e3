"""
Session configuration: the SessionConfig dataclass and its flat text format.

Config files are `key = value` lines. `#` starts a comment, blank lines are
ignored. Top-level keys are SessionConfig fields; the embedded configs use a
dotted prefix:

    truth_shape = rounded_box
    max_iterations = 50
    fit.learning_rate = 0.01
    visual.view_direction = -1, 0, 0
    exploration.strategy = min_u
    deform.regularization = auto

Unknown keys, repeated keys and values that do not parse are errors.

A top-level `seed` also keys `visual.seed` and `sensor.offset_noise_seed`
unless the file sets those explicitly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Tuple

from src.estimate.local_deform import DeformConfig
from src.estimate.template_fit import FitConfig
from src.estimate.uncertainty_field import PropagationConfig
from src.explore.strategy import ExplorationConfig, Strategy
from src.geometry.mesh import MAX_SUBDIVISIONS
from src.geometry.shapes import SHAPE_CATALOG
from src.sensing.tactile import SensorModel
from src.sensing.visual import VisualPriorConfig
from src.utils.errors import ConfigurationError, ParameterError, SessionIOError

SECTIONS = {
    "fit": FitConfig,
    "visual": VisualPriorConfig,
    "sensor": SensorModel,
    "exploration": ExplorationConfig,
    "deform": DeformConfig,
    "propagation": PropagationConfig,
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}
_NONE = {"auto", "none", ""}

# Sessions start from a visual cap that cannot see the far side; this many
# pseudo-observations of roundness settle the unseen axis.
SESSION_ISOTROPY_WEIGHT = 5.0


@dataclass(frozen=True)
class SessionConfig:
    truth_mesh_path: str = ""
    truth_shape: str = "sphere"
    truth_subdivisions: int = 4
    template_subdivisions: int = 3
    probe_travel_d: float = 0.05
    failure_threshold: float = 0.015
    max_iterations: int = 50
    seed: int = 0
    chamfer_samples: int = 30000
    fit: FitConfig = field(default_factory=lambda: FitConfig(isotropy_weight=SESSION_ISOTROPY_WEIGHT))
    visual: VisualPriorConfig = field(default_factory=VisualPriorConfig)
    sensor: SensorModel = field(default_factory=SensorModel)
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    deform: DeformConfig = field(default_factory=DeformConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)

    def __post_init__(self) -> None:
        if not self.probe_travel_d > 0:
            raise ConfigurationError(f"probe_travel_d must be positive, got {self.probe_travel_d}")
        if not self.failure_threshold > 0:
            raise ConfigurationError(f"failure_threshold must be positive, got {self.failure_threshold}")
        if self.max_iterations < 0:
            raise ConfigurationError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.chamfer_samples <= 0:
            raise ConfigurationError(f"chamfer_samples must be positive, got {self.chamfer_samples}")
        for name in ("template_subdivisions", "truth_subdivisions"):
            value = getattr(self, name)
            if not 0 <= value <= MAX_SUBDIVISIONS:
                raise ConfigurationError(f"{name} must be in [0, {MAX_SUBDIVISIONS}], got {value}")
        if not self.truth_mesh_path and self.truth_shape not in SHAPE_CATALOG:
            raise ConfigurationError(
                f"unknown truth_shape {self.truth_shape!r}; choose one of {', '.join(sorted(SHAPE_CATALOG))}"
            )

    @property
    def truth_source(self) -> str:
        return self.truth_mesh_path or f"shape:{self.truth_shape}"

    def with_seed(self, seed: int) -> "SessionConfig":
        """Same config with every random stream keyed on `seed`."""
        return dataclasses.replace(
            self,
            seed=seed,
            visual=dataclasses.replace(self.visual, seed=seed),
            sensor=dataclasses.replace(self.sensor, offset_noise_seed=seed),
        )

    def with_strategy(self, strategy) -> "SessionConfig":
        return dataclasses.replace(
            self, exploration=dataclasses.replace(self.exploration, strategy=Strategy(strategy))
        )

    def to_text(self) -> str:
        lines = ["# VITRE session config"]
        for f in dataclasses.fields(self):
            if f.name not in SECTIONS:
                lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        for section in SECTIONS:
            lines.append("")
            sub = getattr(self, section)
            for f in dataclasses.fields(sub):
                lines.append(f"{section}.{f.name} = {_format_value(getattr(sub, f.name))}")
        return "\n".join(lines) + "\n"


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return value.value
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse_value(raw: str, default: Any) -> Any:
    """Coerce `raw` to the type of the field's default value."""
    if isinstance(default, bool):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, Enum):
        return type(default)(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.split(","))
    if default is None:
        return None if raw.lower() in _NONE else float(raw)
    return raw


def _split_lines(text: str) -> List[Tuple[int, str, str]]:
    out = []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out.append((line_no, key.strip(), value.strip()))
    return out


def parse_config_text(text: str) -> SessionConfig:
    top: Dict[str, Any] = {}
    nested: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
    top_defaults = {f.name: f for f in dataclasses.fields(SessionConfig) if f.name not in SECTIONS}
    base_config = SessionConfig()
    seen = set()

    for line_no, key, raw in _split_lines(text):
        if key in seen:
            raise ConfigurationError(f"line {line_no}: duplicate key {key!r}")
        seen.add(key)
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigurationError(f"line {line_no}: unknown section {section!r}")
            base = getattr(base_config, section)
            defaults = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
            if name not in defaults:
                raise ConfigurationError(f"line {line_no}: unknown key {key!r}")
            target, default = nested[section], defaults[name]
        else:
            if key not in top_defaults:
                raise ConfigurationError(f"line {line_no}: unknown key {key!r}")
            target, default, name = top, top_defaults[key].default, key
        try:
            target[name] = _parse_value(raw, default)
        except ValueError as e:
            raise ConfigurationError(f"line {line_no}: bad value for {key!r}: {e}") from e

    if "seed" in top:
        nested["visual"].setdefault("seed", top["seed"])
        nested["sensor"].setdefault("offset_noise_seed", top["seed"])

    try:
        sections = {
            name: dataclasses.replace(getattr(base_config, name), **values)
            for name, values in nested.items()
        }
        return SessionConfig(**top, **sections)
    except ParameterError as e:
        raise ConfigurationError(str(e)) from e


def load_config(path: str) -> SessionConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise SessionIOError(f"cannot read config {path}: {e}") from e
    try:
        return parse_config_text(text)
    except ConfigurationError as e:
        raise ConfigurationError(f"{path}: {e}") from e
