"""
Simple power analysis on monitor traces.

Traces are averaged, cut into one slot per key bit, and every slot mean is
compared to a two-cluster threshold: a multiply drags the RO counts down, so
a slot below the threshold reads as a 1-bit.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .constants import STREAM_EFFORT
from .engine import Engine, SampleTiming, build_timing, iter_batches
from .errors import SimulationError
from .scenario import Scenario
from .victim import PowerSchedule
from ..ui.progress import counter

log = logging.getLogger(__name__)

_MAX_ITER = 100


# ─────────────────────────────── types ────────────────────────────────
@dataclass(frozen=True)
class SlotTiming:
    bounds: Tuple[Tuple[int, int], ...]   # [first, last) sample per bit

    def __post_init__(self) -> None:
        prev = 0
        for lo, hi in self.bounds:
            if lo < prev or hi < lo:
                raise ValueError("slots must be ordered and non-overlapping")
            prev = hi

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def end(self) -> int:
        return self.bounds[-1][1] if self.bounds else 0


@dataclass(frozen=True)
class Threshold:
    value: float
    degenerate: bool = False


@dataclass(frozen=True)
class KeyGuess:
    bits: Tuple[int, ...]
    margins: Tuple[float, ...]
    threshold: Threshold = Threshold(0.0, True)

    def __post_init__(self) -> None:
        if len(self.bits) != len(self.margins):
            raise ValueError("one margin per guessed bit")


@dataclass(frozen=True)
class AttackResult:
    traces_used: int
    bit_errors: int
    success: bool
    guess: KeyGuess


@dataclass(frozen=True)
class EffortReport:
    mean_traces: float
    saturated: int
    trials: Tuple[AttackResult, ...]
    n_max: int


# ───────────────────────────── operations ─────────────────────────────
def slot_timing(schedule: PowerSchedule, timing: SampleTiming) -> SlotTiming:
    """Sample slots of every key bit for a given sampling grid."""
    return SlotTiming(tuple(timing.samples_in(lo, hi) for lo, hi in schedule.slot_bounds()))


def scenario_slots(scenario: Scenario, sample_period: Optional[float] = None, n_ticks: Optional[int] = None) -> SlotTiming:
    sample_period = scenario.monitor.sample_period if sample_period is None else sample_period
    n_ticks = scenario.n_ticks if n_ticks is None else n_ticks
    timing = build_timing(n_ticks, scenario.pdn.tick_period, sample_period)
    return slot_timing(scenario.schedule, timing)


def slot_means(samples: np.ndarray, timing: SlotTiming) -> np.ndarray:
    """Mean of every slot along the last axis; leading axes are kept."""
    samples = np.asarray(samples, dtype=float)
    if timing.end > samples.shape[-1]:
        raise ValueError(f"slots reach sample {timing.end} but the trace holds {samples.shape[-1]}")
    lo = np.array([b[0] for b in timing.bounds], dtype=np.int64)
    hi = np.array([b[1] for b in timing.bounds], dtype=np.int64)
    empty = np.nonzero(hi == lo)[0]
    if empty.size:
        raise SimulationError(f"slot of bit {int(empty[0])} holds no samples (sampling too slow for the key schedule)")
    csum = np.concatenate([np.zeros(samples.shape[:-1] + (1,)), np.cumsum(samples, axis=-1)], axis=-1)
    return (csum[..., hi] - csum[..., lo]) / (hi - lo)


def adaptive_threshold(means: Sequence[float]) -> Threshold:
    """1-D two-means started at min/max; the midpoint of the final centroids."""
    x = np.asarray(means, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two slot means")
    low, high = float(x.min()), float(x.max())
    if low == high:
        return Threshold(low, degenerate=True)
    for _ in range(_MAX_ITER):
        theta = (low + high) / 2
        below = x <= theta
        new_low, new_high = float(x[below].mean()), float(x[~below].mean())
        if new_low == low and new_high == high:
            break
        low, high = new_low, new_high
    return Threshold((low + high) / 2)


def classify(means: np.ndarray) -> KeyGuess:
    th = adaptive_threshold(means)
    margins = tuple(float(v) for v in np.abs(means - th.value))
    if th.degenerate:
        return KeyGuess(tuple(0 for _ in means), margins, th)
    return KeyGuess(tuple(int(v) for v in means < th.value), margins, th)


def extract_key(traces: np.ndarray, timing: SlotTiming) -> KeyGuess:
    """Guess the exponent from N aligned traces ``(N, S)`` or a single trace."""
    traces = np.asarray(traces, dtype=float)
    if traces.ndim == 1:
        traces = traces[None, :]
    if traces.shape[0] < 1:
        raise ValueError("need at least one trace")
    return classify(slot_means(traces.mean(axis=0), timing))


def bit_errors(guess: Sequence[int], truth: Sequence[int]) -> int:
    if len(guess) != len(truth):
        raise ValueError("guess and key differ in length")
    return sum(int(a) != int(b) for a, b in zip(guess, truth))


def attack(traces: np.ndarray, timing: SlotTiming, truth: Optional[Sequence[int]] = None, tolerance: int = 0) -> AttackResult:
    guess = extract_key(traces, timing)
    n = 1 if np.ndim(traces) == 1 else int(np.shape(traces)[0])
    errors = bit_errors(guess.bits, truth) if truth is not None else 0
    return AttackResult(n, errors, truth is not None and errors <= tolerance, guess)


# ─────────────────────────── attack effort ────────────────────────────
def effort_trial(engine: Engine, trial: int, n_max: int, slots: SlotTiming, tolerance: int = 0) -> AttackResult:
    """Smallest N <= n_max whose averaged traces give the key (within *tolerance*)."""
    sc = engine.scenario
    truth = np.array(sc.key.bits)
    total = np.zeros(slots.n)
    seen = 0
    guess = None
    errors = sc.key.n
    for batch in iter_batches(sc, (sc.experiment.seed, STREAM_EFFORT, trial), n_max, engine):
        per_trace = slot_means(batch.samples[: n_max - seen], slots)
        cumulative = total + np.cumsum(per_trace, axis=0)
        for row in range(per_trace.shape[0]):
            n = seen + row + 1
            guess = classify(cumulative[row] / n)
            errors = int(np.count_nonzero(np.array(guess.bits) != truth))
            if errors <= tolerance:
                return AttackResult(n, errors, True, guess)
        total = cumulative[-1]
        seen += per_trace.shape[0]
        if seen >= n_max:
            break
    return AttackResult(n_max, errors, False, guess)


def attack_effort(
    scenario: Scenario,
    trials: Optional[int] = None,
    n_max: Optional[int] = None,
    workers: int = 1,
    engine: Optional[Engine] = None,
) -> EffortReport:
    """
    Mean traces needed for a full key recovery over independent trials.
    Trials that never succeed count as *n_max* and are reported as saturated.
    """
    trials = scenario.experiment.trials if trials is None else trials
    n_max = scenario.experiment.n_max if n_max is None else n_max
    if trials < 1 or n_max < 1:
        raise ValueError("trials and n_max must be >= 1")
    engine = engine or Engine(scenario)
    slots = slot_timing(scenario.schedule, engine.timing)

    results: List[Optional[AttackResult]] = [None] * trials
    with counter(trials, f"effort ({scenario.mode})", unit="trial") as bar:
        with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
            futures = {
                pool.submit(effort_trial, engine, t, n_max, slots, scenario.error_tolerance): t
                for t in range(trials)
            }
            for future, t in futures.items():
                results[t] = future.result()
                bar.update(1)

    saturated = sum(not r.success for r in results)
    mean = sum(r.traces_used for r in results) / trials
    if saturated:
        log.warning("%d of %d trials did not recover the key within %d traces", saturated, trials, n_max)
    log.info("attack effort (%s): %.2f traces", scenario.mode, mean)
    return EffortReport(mean, saturated, tuple(results), n_max)
