"""
SHIELD run-time controller and the random-noise baseline.

The controller watches monitor samples.  A sample above the threshold means
the victim is silent, so another set of noise ROs is switched on; the
threshold follows the expected count shift of each active set.  The first
sample at or below the threshold, or the sample after the whole bank is on,
switches everything off again.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .pdn import Location

log = logging.getLogger(__name__)

IDLE = "IDLE"
RAMPING = "RAMPING"


# ─────────────────────────────── types ────────────────────────────────
@dataclass(frozen=True)
class NoiseGenBank:
    s: int
    p_set: float
    location: Location = (0, 0)
    ro_per_set: int = 16

    def __post_init__(self) -> None:
        if self.s < 1:
            raise ValueError("a noise bank needs at least one set")
        if self.p_set < 0:
            raise ValueError("p_set must be >= 0")

    @property
    def full_power(self) -> float:
        return self.s * self.p_set

    def within_budget(self, p_mult: float) -> bool:
        # tolerate float error of p_set = p_mult / s
        return self.full_power <= p_mult * (1 + 1e-12)


@dataclass(frozen=True)
class ShieldController:
    theta0: float
    delta: float
    s: int
    active_k: int = 0
    state: str = IDLE

    def __post_init__(self) -> None:
        if not 0 <= self.active_k <= self.s:
            raise ValueError(f"active_k must lie in [0, {self.s}]")
        if (self.active_k == 0) != (self.state == IDLE):
            raise ValueError("active_k == 0 exactly when the controller is IDLE")

    @property
    def threshold(self) -> float:
        return self.theta0 - self.active_k * self.delta


@dataclass(frozen=True)
class RandomNoiseConfig:
    n_ros: int
    p_per_ro: float
    duty: float
    location: Location = (0, 0)

    def __post_init__(self) -> None:
        if self.n_ros < 0 or self.p_per_ro < 0:
            raise ValueError("n_ros and p_per_ro must be >= 0")
        if not 0.0 <= self.duty <= 1.0:
            raise ValueError(f"duty must lie in [0, 1], got {self.duty}")

    @property
    def mean_power(self) -> float:
        return self.n_ros * self.duty * self.p_per_ro


@dataclass(frozen=True)
class ControllerEvent:
    sample_index: int
    event: str
    active_k: int
    threshold: float
    trace: int = 0
    effect_index: Optional[int] = None   # first sample fully under the new level


@dataclass(frozen=True)
class ReactionTime:
    mean: Optional[float]
    events: int

    @property
    def has_data(self) -> bool:
        return self.events > 0


# ───────────────────────────── operations ─────────────────────────────
def shield_step(ctl: ShieldController, sample: float) -> Tuple[ShieldController, int]:
    """Exactly one transition of the controller for one monitor sample."""
    if sample < 0:
        raise ValueError("monitor samples are non-negative")
    if ctl.state == IDLE:
        if sample > ctl.theta0:
            ctl = replace(ctl, active_k=1, state=RAMPING)
        return ctl, ctl.active_k
    if sample > ctl.threshold and ctl.active_k < ctl.s:
        ctl = replace(ctl, active_k=ctl.active_k + 1)
    else:
        # victim drew power, or the whole bank already ran for a sample
        ctl = replace(ctl, active_k=0, state=IDLE)
    return ctl, ctl.active_k


def classify_transition(k_before: int, k_after: int) -> Optional[str]:
    if k_before == 0 and k_after == 1:
        return "DETECT"
    if k_before > 0 and k_after == k_before + 1:
        return "RAMP"
    if k_before > 0 and k_after == 0:
        return "RESET"
    return None


def shield_step_batch(k: np.ndarray, samples: np.ndarray, theta0: float, delta: float, s: int) -> np.ndarray:
    """``shield_step`` applied element-wise to a batch of controllers."""
    threshold = theta0 - k * delta
    detect = (k == 0) & (samples > theta0)
    ramp = (k > 0) & (samples > threshold) & (k < s)
    return np.where(detect, 1, np.where(ramp, k + 1, 0)).astype(k.dtype)


def noise_power(active_k: int, bank: NoiseGenBank) -> float:
    if not 0 <= active_k <= bank.s:
        raise ValueError(f"active_k must lie in [0, {bank.s}], got {active_k}")
    return active_k * bank.p_set


def random_noise_step(cfg: RandomNoiseConfig, rng: np.random.Generator) -> int:
    """Number of baseline ROs switched on for one sample period."""
    return int(rng.binomial(cfg.n_ros, cfg.duty))


def random_noise_draws(cfg: RandomNoiseConfig, rng: np.random.Generator, size) -> np.ndarray:
    return rng.binomial(cfg.n_ros, cfg.duty, size=size)


def measure_reaction_time(events: Iterable[ControllerEvent]) -> ReactionTime:
    """Mean samples from each detection to the first sample the noise covers."""
    delays: List[int] = [
        ev.effect_index - ev.sample_index
        for ev in events
        if ev.event == "DETECT" and ev.effect_index is not None
    ]
    if not delays:
        return ReactionTime(None, 0)
    return ReactionTime(sum(delays) / len(delays), len(delays))
