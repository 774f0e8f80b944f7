"""
Offline calibration of the SHIELD controller.

A dry run of the unprotected victim gives the count level of an idle victim
and of a multiply; the threshold sits half-way.  Two more idle runs, with
the noise bank forced off and forced to one set, give the count shift of a
single set.  Everything runs on its own random stream, so recalibrating
yields the same numbers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .constants import STREAM_CALIBRATE
from .engine import Engine, SampleTiming, simulate_traces
from .errors import CalibrationError
from .scenario import Scenario

log = logging.getLogger(__name__)

CALIBRATION_TRACES = 16


@dataclass(frozen=True)
class CalibrationResult:
    theta0: float
    delta: float
    idle_mean: float
    mult_mean: float


def _windows_inside(timing: SampleTiming, tick_mask: np.ndarray) -> np.ndarray:
    """Samples whose whole window lies on ticks selected by *tick_mask*."""
    covered = timing.tick_w > 0
    return np.all(tick_mask[timing.tick_idx] | ~covered, axis=1)


def calibrate(scenario: Scenario, n_traces: int = CALIBRATION_TRACES) -> CalibrationResult:
    if not scenario.victim.leaks:
        raise CalibrationError("zero power contrast: p_mult must exceed p_square")

    sc = scenario.with_mode("none")
    engine = Engine(sc)
    timing = engine.timing
    seed = sc.experiment.seed
    body = sc.schedule.total_ticks

    mult = np.zeros(engine.n_ticks, dtype=bool)
    mult[:body] = sc.schedule.mult_ticks()
    idle = np.zeros(engine.n_ticks, dtype=bool)
    # skip the tick where the victim stops: its dI/dt spike is not idle
    idle[body + 1:] = True

    mult_samples = _windows_inside(timing, mult)
    idle_samples = _windows_inside(timing, idle)
    if not idle_samples.any():
        raise CalibrationError("no idle sample window: raise experiment.tail_ticks")
    if not mult_samples.any():
        raise CalibrationError("no sample window lies inside a multiply (all-zero key or slow monitor)")

    traces, _ = simulate_traces(sc, (seed, STREAM_CALIBRATE, 0), n_traces, engine)
    avg = traces.mean(axis=0)
    idle_mean = float(avg[idle_samples].mean())
    mult_mean = float(avg[mult_samples].mean())
    if idle_mean <= mult_mean:
        raise CalibrationError(f"idle and multiply counts do not separate ({idle_mean:.3f} vs {mult_mean:.3f})")

    # common random numbers: both levels see the same jitter and phase
    quiet = np.full((1, engine.n_ticks), sc.victim.p_idle)
    off = engine.simulate_batch((seed, STREAM_CALIBRATE, 1), 0, 0, n_traces, victim_power=quiet, forced_k=0)
    one = engine.simulate_batch((seed, STREAM_CALIBRATE, 1), 0, 0, n_traces, victim_power=quiet, forced_k=1)
    delta = max(float((off.samples - one.samples).mean()), 0.0)

    result = CalibrationResult((idle_mean + mult_mean) / 2, delta, idle_mean, mult_mean)
    log.info(
        "calibration: idle %.3f, multiply %.3f -> theta0 %.3f, delta %.3f",
        idle_mean, mult_mean, result.theta0, result.delta,
    )
    return result


def ensure_calibrated(scenario: Scenario) -> Scenario:
    """*scenario* itself, or a copy carrying freshly calibrated thresholds."""
    if scenario.defense.theta0 is not None and scenario.defense.delta is not None:
        return scenario
    result = calibrate(scenario)
    return scenario.with_calibration(result.theta0, result.delta)
