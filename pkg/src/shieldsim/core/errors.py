"""
Exception hierarchy.  The CLI maps ConfigError to exit 2 and every other
ShieldsimError to exit 3.
"""
from __future__ import annotations


class ShieldsimError(Exception):
    """Base class for every error raised on purpose by shieldsim."""

    kind = "runtime"


class ConfigError(ShieldsimError, ValueError):
    """Invalid scenario configuration; ``key_path`` names the offending key."""

    kind = "config"

    def __init__(self, key_path: str, message: str) -> None:
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class FloorplanError(ConfigError):
    """A location lies outside the floorplan or names an unknown label."""


class SimulationError(ShieldsimError, RuntimeError):
    """A run could not be carried out."""


class CalibrationError(SimulationError):
    """Offline calibration cannot derive a threshold (no power contrast)."""

    kind = "calibration"


class UndefinedResultError(ShieldsimError, ArithmeticError):
    """A statistic has no defined value for the given inputs."""

    kind = "undefined"


class TraceFormatError(ShieldsimError, ValueError):
    """A trace or event CSV does not follow the export format."""

    kind = "trace"
