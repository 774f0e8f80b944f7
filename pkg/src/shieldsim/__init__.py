# src/shieldsim/__init__.py
"""
Public re-exports so callers can simply do:

    from shieldsim import pdn, victim, monitor, defense, attacker, evaluate, dse
"""
from importlib import import_module as _imp

_core = "shieldsim.core"

constants   = _imp(f"{_core}.constants")
pdn         = _imp(f"{_core}.pdn")
victim      = _imp(f"{_core}.victim")
monitor     = _imp(f"{_core}.monitor")
defense     = _imp(f"{_core}.defense")
engine      = _imp(f"{_core}.engine")
calibration = _imp(f"{_core}.calibration")
attacker    = _imp(f"{_core}.attacker")
evaluate    = _imp(f"{_core}.evaluate")
dse         = _imp(f"{_core}.dse")
config      = _imp(f"{_core}.config")
traces      = _imp(f"{_core}.traces")
manifest    = _imp(f"{_core}.manifest")

__version__ = constants.VERSION

__all__ = [
    "constants", "pdn", "victim", "monitor", "defense", "engine", "calibration",
    "attacker", "evaluate", "dse", "config", "traces", "manifest", "__version__",
]
