"""
Exception hierarchy for the VITRE pipeline.

Everything raised on purpose derives from VitreError so the runner can map it
to an exit code. Sensing "errors" (no contact, pad miss, empty prior) and
ExplorationComplete are control signals as much as failures; the session loop
catches them and records the outcome instead of aborting.
"""


class VitreError(Exception):
    """Base class for all pipeline errors."""


class ParameterError(VitreError, ValueError):
    """An argument is outside its documented domain."""


class GeometryError(VitreError):
    """A mesh is degenerate or violates a structural invariant."""


class ConfigurationError(VitreError):
    """A config file or config value is invalid."""


class NumericalError(VitreError):
    """A linear solve or optimization failed numerically."""


class DivergenceError(NumericalError):
    """The ellipsoid fit produced a non-finite loss. Shrink the learning rate."""


class SessionIOError(VitreError, OSError):
    """A mesh, config or session log could not be read or written."""


class NoContactError(VitreError):
    """A contact reading carries no force and no torque."""


class PadMissError(VitreError):
    """The contact point falls outside the sensing pad."""


class EmptyPriorError(VitreError):
    """No visible truth surface inside the camera cone."""


class ExplorationComplete(VitreError):
    """No vertex satisfies the candidate constraints any more."""


class VitreWarning(UserWarning):
    """Flagged-but-allowed conditions (under-determined fits, odd configs)."""


# Exit codes used by run_pipeline.py
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (SessionIOError, OSError)):
        return EXIT_IO
    return EXIT_CONFIG
