"""
Resolved scenario: every domain object one simulation run needs.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

from .defense import NoiseGenBank, RandomNoiseConfig, ShieldController
from .monitor import MonitorConfig, PlacementSpec, RoSensorParams, resolve_placement
from .pdn import Floorplan, Location, PdnParams
from .victim import PowerSchedule, RsaKey, VictimPowerParams, build_power_schedule


@dataclass(frozen=True)
class Tenant:
    location: Location
    p_mean: float
    p_std: float


@dataclass(frozen=True)
class DefenseSetup:
    mode: str
    bank: NoiseGenBank
    random: RandomNoiseConfig
    theta0: Optional[float] = None
    delta: Optional[float] = None

    def controller(self) -> ShieldController:
        if self.theta0 is None or self.delta is None:
            raise ValueError("SHIELD needs theta0 and delta (run calibrate first)")
        return ShieldController(self.theta0, self.delta, self.bank.s)


@dataclass(frozen=True)
class ExperimentSetup:
    name: str
    seed: int
    trials: int = 20
    n_max: int = 2000
    traces: int = 10
    tail_ticks: int = 64
    success_order: int = 2
    success_traces: int = 1
    reaction_frequencies: Tuple[float, ...] = (10e6, 50e6, 100e6)


@dataclass(frozen=True)
class DseSetup:
    mode: str = "exhaustive"
    placements: Tuple[str, ...] = ("far", "close1", "close2")
    frequencies: Tuple[float, ...] = (10e6, 100e6)
    ro_counts: Tuple[int, ...] = (16, 32, 64)
    w_acc: float = 0.8
    w_area: float = 0.1
    w_power: float = 0.1
    trials: int = 200
    effort_trials: int = 3
    effort_n_max: int = 50
    noise_sets: Tuple[int, ...] = (1, 2, 4, 8)
    random_ros: Tuple[int, ...] = (8, 16, 32, 64)


@dataclass(frozen=True)
class OverheadModel:
    ref_counter_width: int = 16
    shield_control_ff: int = 2
    bank_register_width: int = 8
    random_tff_chain: int = 48
    lfsr_width: int = 16
    victim_ff: int = 4096
    static_monitor_w: float = 0.0
    static_shield_w: float = 0.0
    static_random_w: float = 0.0


@dataclass(frozen=True)
class Scenario:
    floorplan: Floorplan
    pdn: PdnParams
    victim: VictimPowerParams
    key: RsaKey
    monitor: MonitorConfig
    defense: DefenseSetup
    experiment: ExperimentSetup
    tenants: Tuple[Tenant, ...] = ()
    placements: Dict[str, PlacementSpec] = field(default_factory=dict)
    error_tolerance: int = 0
    dse: DseSetup = field(default_factory=DseSetup)
    overhead: OverheadModel = field(default_factory=OverheadModel)

    # ── derived views ────────────────────────────────────────────────
    @cached_property
    def schedule(self) -> PowerSchedule:
        return build_power_schedule(self.key, self.victim)

    @property
    def n_ticks(self) -> int:
        return self.schedule.total_ticks + self.experiment.tail_ticks

    @property
    def mode(self) -> str:
        return self.defense.mode

    # ── variants ─────────────────────────────────────────────────────
    def with_mode(self, mode: str) -> "Scenario":
        return replace(self, defense=replace(self.defense, mode=mode))

    def with_key(self, key: RsaKey) -> "Scenario":
        return replace(self, key=key)

    def with_victim(self, **changes) -> "Scenario":
        return replace(self, victim=replace(self.victim, **changes))

    def with_monitor(
        self,
        placement: Optional[str] = None,
        f_ref: Optional[float] = None,
        m: Optional[int] = None,
        sensor: Optional[RoSensorParams] = None,
    ) -> "Scenario":
        """Swap monitor parameters; a new m or placement re-resolves RO locations."""
        mon = self.monitor
        m = mon.m if m is None else m
        locations = mon.ro_locations
        if placement is not None or m != mon.m:
            spec = self.placements[placement] if placement is not None else None
            if spec is None:
                raise ValueError("changing m needs a placement to re-resolve RO locations")
            locations = resolve_placement(spec, m, self.floorplan, f"placements.{placement}")
        mon = replace(
            mon,
            m=m,
            ro_locations=locations,
            f_ref=mon.f_ref if f_ref is None else f_ref,
            sensor=mon.sensor if sensor is None else sensor,
        )
        return replace(self, monitor=mon)

    def with_calibration(self, theta0: float, delta: float) -> "Scenario":
        return replace(self, defense=replace(self.defense, theta0=theta0, delta=delta))

    def with_bank(self, **changes) -> "Scenario":
        return replace(self, defense=replace(self.defense, bank=replace(self.defense.bank, **changes)))

    def with_random(self, **changes) -> "Scenario":
        return replace(self, defense=replace(self.defense, random=replace(self.defense.random, **changes)))
