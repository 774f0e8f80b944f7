"""
Offline design-space exploration of the power monitor, plus the sizing
sweeps for the noise sources.

Every candidate monitor (placement × sampling frequency × RO count) attacks
the unprotected victim; its bit errors, attack effort, flip-flops and power
are min-max normalised over the sweep and combined into a weighted cost.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .attacker import attack_effort, bit_errors, extract_key, slot_timing
from .calibration import calibrate
from .constants import STREAM_DSE
from .engine import Engine, iter_batches
from .evaluate import component_ff, component_power, simulated_noise_power
from .scenario import Scenario
from ..ui.progress import progress

log = logging.getLogger(__name__)


# ─────────────────────────────── types ────────────────────────────────
@dataclass(frozen=True)
class Candidate:
    placement: str
    f_ref: float
    m: int

    @property
    def name(self) -> str:
        return f"{self.placement}/{self.f_ref / 1e6:g}MHz/{self.m}"


@dataclass(frozen=True)
class DseSpace:
    placements: Tuple[str, ...]
    frequencies: Tuple[float, ...]
    ro_counts: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not (self.placements and self.frequencies and self.ro_counts):
            raise ValueError("every DSE axis needs at least one value")

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "DseSpace":
        d = scenario.dse
        return cls(tuple(d.placements), tuple(d.frequencies), tuple(d.ro_counts))

    def candidates(self) -> List[Candidate]:
        return [Candidate(p, f, m) for p, f, m in itertools.product(self.placements, self.frequencies, self.ro_counts)]


@dataclass(frozen=True)
class CandidateMetrics:
    avg_bit_errors: float
    traces_to_extract: float
    ff_count: int
    avg_power: float

    def __post_init__(self) -> None:
        if min(self.avg_bit_errors, self.traces_to_extract, self.ff_count, self.avg_power) < 0:
            raise ValueError("candidate metrics must be non-negative")


@dataclass(frozen=True)
class Weights:
    w_acc: float = 0.8
    w_area: float = 0.1
    w_power: float = 0.1

    def __post_init__(self) -> None:
        if min(self.w_acc, self.w_area, self.w_power) < 0:
            raise ValueError("weights must be >= 0")
        if self.w_acc + self.w_area + self.w_power == 0:
            raise ValueError("weights must not all be zero")


@dataclass(frozen=True)
class RankedCandidate:
    candidate: Candidate
    metrics: CandidateMetrics
    cost: float
    rank: int


@dataclass(frozen=True)
class DseReport:
    ranking: Tuple[RankedCandidate, ...]
    degenerate: bool
    mode: str

    @property
    def winner(self) -> RankedCandidate:
        return self.ranking[0]


# ───────────────────────────── operations ─────────────────────────────
def candidate_scenario(candidate: Candidate, scenario: Scenario) -> Scenario:
    return scenario.with_monitor(placement=candidate.placement, f_ref=candidate.f_ref, m=candidate.m).with_mode("none")


def evaluate_candidate(
    candidate: Candidate,
    scenario: Scenario,
    trials: Optional[int] = None,
    workers: int = 1,
) -> CandidateMetrics:
    """Attack the unprotected victim through *candidate*; fixed streams per sweep."""
    d = scenario.dse
    trials = d.trials if trials is None else trials
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sc = candidate_scenario(candidate, scenario)
    engine = Engine(sc)
    slots = slot_timing(sc.schedule, engine.timing)

    errors, seen = 0, 0
    for batch in iter_batches(sc, (sc.experiment.seed, STREAM_DSE), trials, engine):
        for trace in batch.samples[: trials - seen]:
            errors += bit_errors(extract_key(trace, slots).bits, sc.key.bits)
        seen += min(batch.size, trials - seen)
        if seen >= trials:
            break

    effort = attack_effort(sc, d.effort_trials, d.effort_n_max, workers=workers, engine=engine)
    metrics = CandidateMetrics(
        avg_bit_errors=errors / trials,
        traces_to_extract=effort.mean_traces,
        ff_count=component_ff("monitor", sc),
        avg_power=component_power("monitor", sc, {}),
    )
    log.debug("%s: %s", candidate.name, metrics)
    return metrics


def normalize(values: Sequence[float]) -> Tuple[List[float], bool]:
    """Min-max onto [0, 1]; a constant axis maps to zeros and is flagged."""
    x = np.asarray(values, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return [0.0] * len(x), True
    return [float(v) for v in (x - lo) / (hi - lo)], False


def cost(normalized: Tuple[float, float, float], weights: Weights) -> float:
    """Weighted sum of normalised (bit errors, flip-flops, power); lower wins."""
    acc, area, power = normalized
    return weights.w_acc * acc + weights.w_area * area + weights.w_power * power


def rank(results: Dict[Candidate, CandidateMetrics], weights: Weights) -> Tuple[Tuple[RankedCandidate, ...], bool]:
    items = list(results.items())
    acc, _ = normalize([m.avg_bit_errors for _, m in items])
    area, _ = normalize([m.ff_count for _, m in items])
    power, _ = normalize([m.avg_power for _, m in items])
    scored = [
        (cost((a, f, p), weights), cand, metrics)
        for (cand, metrics), a, f, p in zip(items, acc, area, power)
    ]
    scored.sort(key=lambda s: (s[0], s[2].ff_count, s[2].avg_power, s[1].name))
    ranking = tuple(RankedCandidate(c, m, cst, i + 1) for i, (cst, c, m) in enumerate(scored))
    return ranking, len(items) == 1


def explore(
    space: DseSpace,
    scenario: Scenario,
    weights: Optional[Weights] = None,
    mode: Optional[str] = None,
    workers: int = 1,
) -> DseReport:
    d = scenario.dse
    weights = weights or Weights(d.w_acc, d.w_area, d.w_power)
    mode = mode or d.mode
    if mode == "exhaustive":
        results = {
            cand: evaluate_candidate(cand, scenario, workers=workers)
            for cand in progress(space.candidates(), desc="dse", unit="candidate")
        }
    elif mode == "coordinate":
        results = _coordinate_descent(space, scenario, weights, workers)
    else:
        raise ValueError(f"unknown DSE mode {mode!r}")

    ranking, degenerate = rank(results, weights)
    if degenerate:
        log.warning("single-candidate sweep: normalisation is degenerate")
    log.info("DSE winner: %s (cost %.4f)", ranking[0].candidate.name, ranking[0].cost)
    return DseReport(ranking, degenerate, mode)


def _coordinate_descent(space: DseSpace, scenario: Scenario, weights: Weights, workers: int) -> Dict[Candidate, CandidateMetrics]:
    """Fix one axis at a time, best value first, until a pass changes nothing."""
    mon = scenario.monitor
    placement = space.placements[0]
    current = Candidate(
        placement,
        mon.f_ref if mon.f_ref in space.frequencies else space.frequencies[0],
        mon.m if mon.m in space.ro_counts else space.ro_counts[0],
    )
    results: Dict[Candidate, CandidateMetrics] = {}
    axes = (("placement", space.placements), ("f_ref", space.frequencies), ("m", space.ro_counts))
    for _ in range(len(axes) + 1):
        start = current
        for field_name, values in axes:
            trial = [replace(current, **{field_name: v}) for v in values]
            for cand in trial:
                if cand not in results:
                    results[cand] = evaluate_candidate(cand, scenario, workers=workers)
            ranking, _ = rank({c: results[c] for c in trial}, weights)
            current = ranking[0].candidate
            log.debug("coordinate step %s -> %s", field_name, current.name)
        if current == start:
            break
    return results


# ───────────────────────────── noise sizing ───────────────────────────
@dataclass(frozen=True)
class SizingRow:
    size: int
    mean_traces: float
    saturated: int
    ff: int
    power_w: float


def noise_sizing(scenario: Scenario, workers: int = 1) -> Tuple[List[SizingRow], List[SizingRow]]:
    """
    Attack effort, flip-flops and noise power for every SHIELD set count and
    every random-baseline RO count of the sweep.
    """
    d = scenario.dse
    shield_rows: List[SizingRow] = []
    for s in progress(d.noise_sets, desc="sizing (shield)", unit="size"):
        sc = scenario.with_mode("shield").with_bank(s=s, p_set=scenario.victim.p_mult / s)
        cal = calibrate(sc)
        sc = sc.with_calibration(cal.theta0, cal.delta)
        effort = attack_effort(sc, d.effort_trials, d.effort_n_max, workers=workers)
        ff = component_ff("monitor", sc) + component_ff("shield_bank", sc)
        shield_rows.append(SizingRow(s, effort.mean_traces, effort.saturated, ff, simulated_noise_power(sc, "shield")))

    random_rows: List[SizingRow] = []
    for n_ros in progress(d.random_ros, desc="sizing (random)", unit="size"):
        sc = scenario.with_mode("random").with_random(n_ros=n_ros)
        effort = attack_effort(sc, d.effort_trials, d.effort_n_max, workers=workers)
        random_rows.append(SizingRow(
            n_ros, effort.mean_traces, effort.saturated,
            component_ff("random_bank", sc), simulated_noise_power(sc, "random"),
        ))
    return shield_rows, random_rows
