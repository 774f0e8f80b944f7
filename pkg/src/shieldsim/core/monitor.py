"""
Ring-oscillator power monitor: voltage → RO frequency → windowed count →
average of m counters.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .pdn import Floorplan, Location, ring_locations

log = logging.getLogger(__name__)


# ─────────────────────────────── types ────────────────────────────────
@dataclass(frozen=True)
class RoSensorParams:
    k: float = 200e6            # Hz per volt
    f0: float = 100e6           # Hz
    n_ff: int = 16
    cycle_jitter: float = 0.0   # relative std of one RO period

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.f0 < 0:
            raise ValueError("f0 must be >= 0")
        if self.n_ff < 1:
            raise ValueError("n_ff must be >= 1")
        if self.cycle_jitter < 0:
            raise ValueError("cycle_jitter must be >= 0")

    @property
    def max_count(self) -> int:
        return (1 << self.n_ff) - 1


@dataclass(frozen=True)
class MonitorConfig:
    m: int
    ro_locations: Tuple[Location, ...]
    f_ref: float
    c_ref: int
    sensor: RoSensorParams = field(default_factory=RoSensorParams)
    self_power_per_ro: float = 0.0

    def __post_init__(self) -> None:
        if not is_power_of_two(self.m):
            raise ValueError(f"m must be a power of 2, got {self.m}")
        if len(self.ro_locations) != self.m:
            raise ValueError(f"expected {self.m} RO locations, got {len(self.ro_locations)}")
        if self.f_ref <= 0:
            raise ValueError("f_ref must be > 0")
        if self.c_ref < 1:
            raise ValueError("c_ref must be >= 1")
        if self.self_power_per_ro < 0:
            raise ValueError("self_power_per_ro must be >= 0")

    @property
    def sample_period(self) -> float:
        return self.c_ref / self.f_ref

    @property
    def shift(self) -> int:
        return self.m.bit_length() - 1

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Trace:
    samples: np.ndarray
    sample_period: float
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sample_period <= 0:
            raise ValueError("sample_period must be > 0")
        if np.any(np.asarray(self.samples) < 0):
            raise ValueError("trace samples must be non-negative")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class PlacementSpec:
    kind: str
    anchor: Location
    radius: int = 0


# ───────────────────────────── operations ─────────────────────────────
def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def ro_frequency(v: float, sensor: RoSensorParams) -> float:
    if v < 0:
        raise ValueError("voltage must be >= 0")
    return sensor.k * v + sensor.f0


def ro_count(f_ro: float, f_ref: float, c_ref: int, phase: float, n_ff: int = 16) -> int:
    """
    Oscillations counted while the reference counter runs to *c_ref*.
    *phase* in [0, 1) models the misalignment of the two clocks.
    """
    if not math.isfinite(f_ro):
        raise ValueError(f"RO frequency must be finite, got {f_ro}")
    if f_ref <= 0 or c_ref < 1:
        raise ValueError("f_ref must be > 0 and c_ref >= 1")
    window = c_ref / f_ref
    count = math.floor(max(f_ro, 0.0) * window + phase)
    return min(count, (1 << n_ff) - 1)


def ro_counts(osc: np.ndarray, phase: np.ndarray, n_ff: int) -> np.ndarray:
    """Vector form of ``ro_count`` taking oscillations per window (f·T)."""
    counts = np.floor(np.maximum(osc, 0.0) + phase)
    return np.minimum(counts, (1 << n_ff) - 1).astype(np.int64)


def monitor_sample(counts: Sequence[int]) -> int:
    """Average of m RO counts as the hardware does it: sum, then shift."""
    m = len(counts)
    if not is_power_of_two(m):
        raise ValueError(f"number of counts must be a power of 2, got {m}")
    return int(sum(int(c) for c in counts)) >> (m.bit_length() - 1)


def monitor_samples(counts: np.ndarray) -> np.ndarray:
    """``monitor_sample`` over axis -2 of an ``(..., m, samples)`` array."""
    m = counts.shape[-2]
    if not is_power_of_two(m):
        raise ValueError(f"number of counts must be a power of 2, got {m}")
    return counts.sum(axis=-2) >> (m.bit_length() - 1)


def resolve_placement(spec: PlacementSpec, m: int, floorplan: Floorplan, key_path: str = "placement") -> Tuple[Location, ...]:
    if spec.kind == "cluster":
        locations: List[Location] = [tuple(spec.anchor)] * m
    elif spec.kind == "ring":
        locations = ring_locations(spec.anchor, spec.radius, m)
    else:
        raise ValueError(f"unknown placement kind {spec.kind!r}")
    return tuple(floorplan.resolve(loc, key_path) for loc in locations)
