"""
Shared power-distribution network model.

Each current source causes a local drop  r_eff·I + l_eff·dI/dt  that reaches
a point d cells away attenuated by 1/(1 + lambda·d).  The model is linear, so
the engine evaluates whole tick ranges with the same closed form that
``voltage_at`` applies to a single point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import FloorplanError

log = logging.getLogger(__name__)

Location = Tuple[int, int]
LocationRef = Union[str, Sequence[int]]


# ─────────────────────────────── types ────────────────────────────────
@dataclass(frozen=True)
class Floorplan:
    width: int
    height: int
    named_locations: Dict[str, Location] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise FloorplanError("floorplan", f"grid must be at least 1x1, got {self.width}x{self.height}")
        for label, loc in self.named_locations.items():
            if not self.contains(loc):
                raise FloorplanError(f"floorplan.locations.{label}", f"{tuple(loc)} lies outside the grid")

    def contains(self, loc: Sequence[int]) -> bool:
        x, y = loc
        return 0 <= x < self.width and 0 <= y < self.height

    def resolve(self, ref: LocationRef, key_path: str = "location") -> Location:
        """Turn a label or an ``[x, y]`` pair into an on-grid coordinate."""
        if isinstance(ref, str):
            if ref not in self.named_locations:
                raise FloorplanError(key_path, f"unknown location label {ref!r}")
            return tuple(self.named_locations[ref])
        try:
            x, y = (int(v) for v in ref)
        except (TypeError, ValueError):
            raise FloorplanError(key_path, f"expected a label or [x, y], got {ref!r}") from None
        if not self.contains((x, y)):
            raise FloorplanError(key_path, f"({x}, {y}) lies outside the {self.width}x{self.height} grid")
        return (x, y)


@dataclass(frozen=True)
class PdnParams:
    v_nom: float = 1.0
    r_eff: float = 0.1
    l_eff: float = 1e-8
    lam: float = 0.5
    tick_period: float = 1e-7

    def __post_init__(self) -> None:
        if self.v_nom <= 0:
            raise ValueError("v_nom must be > 0")
        if self.r_eff < 0 or self.l_eff < 0 or self.lam < 0:
            raise ValueError("r_eff, l_eff and lambda must be >= 0")
        if self.tick_period <= 0:
            raise ValueError("tick_period must be > 0")


@dataclass(frozen=True)
class CurrentSource:
    location: Location
    power_demand: float
    prev_current: float = 0.0

    def __post_init__(self) -> None:
        if self.power_demand < 0:
            raise ValueError(f"power_demand must be >= 0, got {self.power_demand}")


@dataclass(frozen=True)
class PdnState:
    """Sources as seen at ``tick``."""

    params: PdnParams
    sources: Tuple[CurrentSource, ...]
    tick: int = 0


# ───────────────────────────── operations ─────────────────────────────
def manhattan(a: Sequence[int], b: Sequence[int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def attenuation(d: float, lam: float) -> float:
    """Spatial weight of a drop seen ``d`` cells away; 1 at the source."""
    if d < 0 or lam < 0:
        raise ValueError("distance and lambda must be >= 0")
    return 1.0 / (1.0 + lam * d)


def source_current(power_demand: float, v_nom: float) -> float:
    if v_nom <= 0:
        raise ValueError(f"v_nom must be > 0, got {v_nom}")
    return power_demand / v_nom


def _source_drop(src: CurrentSource, params: PdnParams) -> float:
    i_now = source_current(src.power_demand, params.v_nom)
    return params.r_eff * i_now + params.l_eff * (i_now - src.prev_current) / params.tick_period


def voltage_at(
    loc: Location,
    sources: Iterable[CurrentSource],
    params: PdnParams,
    floorplan: Floorplan | None = None,
) -> float:
    """Local supply voltage at *loc*; clamped below at 0 V."""
    v = params.v_nom
    for src in sources:
        if floorplan is not None and not floorplan.contains(src.location):
            raise FloorplanError("source.location", f"{src.location} lies outside the floorplan")
        v -= attenuation(manhattan(loc, src.location), params.lam) * _source_drop(src, params)
    return max(v, 0.0)


def step(state: PdnState, tick: int, power_demands: Sequence[float]) -> PdnState:
    """
    Advance to *tick*: every source remembers the current it drew at the
    previous tick and takes its new demand.
    """
    if tick != state.tick + 1:
        raise ValueError(f"tick must advance by exactly 1 (state at {state.tick}, got {tick})")
    if len(power_demands) != len(state.sources):
        raise ValueError("one power demand per source is required")
    v_nom = state.params.v_nom
    sources = tuple(
        replace(src, prev_current=source_current(src.power_demand, v_nom), power_demand=float(p))
        for src, p in zip(state.sources, power_demands)
    )
    return PdnState(state.params, sources, tick)


# ─────────────────────────── vectorised helpers ───────────────────────
def attenuation_matrix(
    sensors: Sequence[Location], sources: Sequence[Location], lam: float
) -> np.ndarray:
    """``A[i, j]`` = attenuation from source j to sensor i."""
    s = np.asarray(sensors, dtype=float).reshape(-1, 2)
    q = np.asarray(sources, dtype=float).reshape(-1, 2)
    d = np.abs(s[:, None, :] - q[None, :, :]).sum(axis=2)
    return 1.0 / (1.0 + lam * d)


def drop_signal(power: np.ndarray, params: PdnParams, prev_power: np.ndarray | None = None) -> np.ndarray:
    """
    Unattenuated drop per tick for a power series along the last axis.
    The tick before index 0 draws ``prev_power`` (steady pre-history when
    omitted).
    """
    current = np.asarray(power, dtype=float) / params.v_nom
    if prev_power is None:
        prev = current[..., :1]
    else:
        prev = np.asarray(prev_power, dtype=float)[..., None] / params.v_nom
    di = np.diff(current, axis=-1, prepend=prev)
    return params.r_eff * current + params.l_eff * di / params.tick_period


def ring_locations(anchor: Location, radius: int, count: int) -> List[Location]:
    """*count* cells spread evenly on the Manhattan circle around *anchor*."""
    if radius == 0:
        return [tuple(anchor)] * count
    ax, ay = anchor
    cells: List[Location] = []
    # walk the diamond counter-clockwise starting east of the anchor
    for i in range(4 * radius):
        side, off = divmod(i, radius)
        dx, dy = [(radius - off, off), (-off, radius - off), (off - radius, -off), (off, off - radius)][side]
        cells.append((ax + dx, ay + dy))
    stride = len(cells) / count
    return [cells[math.floor(i * stride) % len(cells)] for i in range(count)]
