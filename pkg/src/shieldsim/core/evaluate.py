"""
Evaluation metrics: TVLA, consecutive-trace correlation, n-th order success
rate, sample distributions, area/power overhead and reaction time.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .attacker import KeyGuess, extract_key, slot_means, slot_timing
from .calibration import calibrate, ensure_calibrated
from .constants import (
    STREAM_CORRELATION, STREAM_DIST, STREAM_OVERHEAD, STREAM_REACTION,
    STREAM_SUCCESS, STREAM_TVLA, TVLA_THRESHOLD,
)
from .defense import ReactionTime, measure_reaction_time
from .engine import Engine, iter_batches, make_rng, simulate_traces
from .errors import UndefinedResultError
from .scenario import Scenario
from .victim import RsaKey, build_power_schedule, power_series
from ..ui.progress import progress

log = logging.getLogger(__name__)


# ─────────────────────────────── Welch t ──────────────────────────────
def welch_t(group_a: Sequence[float], group_b: Sequence[float]) -> float:
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    se2 = a.var(ddof=1) / a.size + b.var(ddof=1) / b.size
    if not math.isfinite(se2):
        raise ValueError("group variances must be finite")
    if se2 == 0:
        raise UndefinedResultError("Welch t is undefined for zero variance in both groups")
    return float((a.mean() - b.mean()) / math.sqrt(se2))


def _spread(s: np.ndarray, q: np.ndarray, n: float) -> np.ndarray:
    """Sum of squared deviations; a constant group gives exactly 0."""
    m2 = q - s * s / n
    # cancellation leaves a residue of order 1e-16 * q on constant data
    return np.where(m2 > 1e-12 * np.abs(q), m2, 0.0)


def _t_from_moments(n: int, s_a, q_a, s_b, q_b) -> Tuple[np.ndarray, np.ndarray]:
    """
    Welch t and Welch-Satterthwaite degrees of freedom per point from running
    sums.  Points where both groups are constant have no t and come back NaN.
    """
    n = float(n)
    se2_a = _spread(s_a, q_a, n) / (n - 1) / n
    se2_b = _spread(s_b, q_b, n) / (n - 1) / n
    mean_a, mean_b = s_a / n, s_b / n
    se2 = se2_a + se2_b
    defined = se2 > 0
    safe = np.where(defined, se2, 1.0)
    t = np.where(defined, (mean_a - mean_b) / np.sqrt(safe), np.nan)
    dof = np.where(defined, safe ** 2 * (n - 1) / np.where(defined, se2_a ** 2 + se2_b ** 2, 1.0), np.nan)
    return t, dof


def normal_equivalent(t: np.ndarray, dof: np.ndarray) -> np.ndarray:
    """|t| as the standard-normal deviate with the same tail probability."""
    return stats.norm.isf(stats.t.sf(np.abs(t), dof))


# ───────────────────────────────── TVLA ───────────────────────────────
@dataclass
class TvlaReport:
    t_values: np.ndarray                      # per point; NaN = both groups constant
    traces_to_cross: Optional[int]            # pairs of traces; None = not crossed
    n_max: int
    curve: List[Tuple[int, float]] = field(default_factory=list)
    threshold: float = TVLA_THRESHOLD

    @property
    def crossed(self) -> bool:
        return self.traces_to_cross is not None


class TvlaAccumulator:
    """
    Running fixed-vs-random t statistic over interleaved trace pairs.  The
    threshold applies to the largest |t| on the normal scale, so a handful
    of pairs needs a far larger raw t than a few hundred do.
    """

    def __init__(self, n_points: int, threshold: float = TVLA_THRESHOLD) -> None:
        self.threshold = threshold
        self.pairs = 0
        self.sums = np.zeros((4, n_points))     # sum_a, sumsq_a, sum_b, sumsq_b
        self.curve: List[Tuple[int, float]] = []
        self.t_values = np.full(n_points, np.nan)
        self.crossed_at: Optional[int] = None

    def update(self, fixed: np.ndarray, random: np.ndarray) -> Optional[int]:
        """Feed ``(B, P)`` rows of both groups; returns the crossing pair count once reached."""
        fixed = np.asarray(fixed, dtype=float)
        random = np.asarray(random, dtype=float)
        if fixed.shape != random.shape:
            raise ValueError("both groups need the same shape")
        if fixed.shape[0] == 0:
            return self.crossed_at
        moments = np.stack([
            np.cumsum(fixed, axis=0), np.cumsum(fixed ** 2, axis=0),
            np.cumsum(random, axis=0), np.cumsum(random ** 2, axis=0),
        ]) + self.sums[:, None, :]
        n = self.pairs + np.arange(1, fixed.shape[0] + 1)
        for row, pairs in enumerate(n):
            if pairs < 2:
                continue
            t, dof = _t_from_moments(int(pairs), *moments[:, row, :])
            z = normal_equivalent(t[~np.isnan(t)], dof[~np.isnan(t)])
            t_max = float(z.max()) if z.size else 0.0
            self.curve.append((int(pairs), t_max))
            self.t_values = t
            if t_max > self.threshold:
                self.crossed_at = int(pairs)
                break
        self.sums = moments[:, row, :]
        self.pairs = int(n[row])
        return self.crossed_at


def tvla_ticks(scenario: Scenario) -> int:
    """Ticks that hold the schedule of any exponent as long as the key."""
    v = scenario.victim
    return scenario.key.n * (v.t_square + v.t_mult) + scenario.experiment.tail_ticks


def tvla_traces_to_leak(scenario: Scenario, n_max: Optional[int] = None) -> TvlaReport:
    """
    Fixed exponent (the secret key) against a fresh random exponent per trace,
    acquired in interleaved pairs and re-tested after every pair.

    The test points are the per-bit slot means: every trace is cut by the
    slots of its own exponent, the segmentation an SPA attacker applies.
    """
    n_max = scenario.experiment.n_max if n_max is None else n_max
    if n_max < 4:
        raise ValueError("TVLA needs n_max >= 4")
    engine = Engine(scenario, n_ticks=tvla_ticks(scenario))
    seed = scenario.experiment.seed
    fixed_slots = slot_timing(scenario.schedule, engine.timing)

    def random_schedule(i: int):
        bits = make_rng(seed, STREAM_TVLA, 2, i).integers(0, 2, size=scenario.key.n)
        key = RsaKey(tuple(int(b) for b in bits), scenario.key.modulus)
        return build_power_schedule(key, scenario.victim)

    def random_exponents(start: int, size: int) -> np.ndarray:
        return np.stack([power_series(random_schedule(i), engine.n_ticks) for i in range(start, start + size)])

    acc = TvlaAccumulator(scenario.key.n)
    fixed_batches = iter_batches(scenario, (seed, STREAM_TVLA, 0), n_max, engine)
    random_batches = iter_batches(scenario, (seed, STREAM_TVLA, 1), n_max, engine, random_exponents)
    for fixed, rnd in progress(zip(fixed_batches, random_batches), desc=f"tvla ({scenario.mode})", unit="batch"):
        take = min(fixed.size, n_max - acc.pairs)
        random_means = np.stack([
            slot_means(row, slot_timing(random_schedule(rnd.start + j), engine.timing))
            for j, row in enumerate(rnd.samples[:take])
        ])
        if acc.update(slot_means(fixed.samples[:take], fixed_slots), random_means) is not None:
            break
        if acc.pairs >= n_max:
            break

    log.info(
        "TVLA (%s): %s", scenario.mode,
        f"crossed after {acc.crossed_at} pairs" if acc.crossed_at else f"not crossed in {n_max} pairs",
    )
    return TvlaReport(acc.t_values, acc.crossed_at, n_max, acc.curve)


# ───────────────────────────── correlation ────────────────────────────
@dataclass(frozen=True)
class CorrelationReport:
    coefficients: Tuple[Optional[float], ...]    # None = constant trace in the pair

    @property
    def undefined(self) -> int:
        return sum(c is None for c in self.coefficients)

    @property
    def mean(self) -> Optional[float]:
        defined = [c for c in self.coefficients if c is not None]
        return sum(defined) / len(defined) if defined else None


def consecutive_correlation(traces: Sequence[Sequence[float]]) -> CorrelationReport:
    rows = [np.asarray(t, dtype=float) for t in traces]
    if len(rows) < 2:
        raise ValueError("need at least two traces")
    if len({r.shape for r in rows}) != 1 or rows[0].ndim != 1 or rows[0].size < 2:
        raise ValueError("traces must be 1-D, of equal length, with at least two samples")
    out: List[Optional[float]] = []
    for x, y in zip(rows, rows[1:]):
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            out.append(None)
            continue
        r = float(stats.pearsonr(x, y)[0])
        out.append(min(1.0, max(-1.0, r)))
    return CorrelationReport(tuple(out))


def correlation_for(scenario: Scenario, n_traces: Optional[int] = None) -> Tuple[CorrelationReport, float]:
    """Consecutive correlation of simulated traces plus the mean slot-mean variance."""
    n_traces = max(scenario.experiment.traces, 2) if n_traces is None else n_traces
    engine = Engine(scenario)
    traces, _ = simulate_traces(scenario, (scenario.experiment.seed, STREAM_CORRELATION), n_traces, engine)
    slots = slot_timing(scenario.schedule, engine.timing)
    variance = float(slot_means(traces, slots).var(axis=1).mean())
    return consecutive_correlation(traces), variance


# ───────────────────────────── success rate ───────────────────────────
def candidate_order(guess: KeyGuess) -> np.ndarray:
    """Bit indices by increasing margin; candidate j flips the first j-1 of them."""
    return np.argsort(np.asarray(guess.margins), kind="stable")


def rank_of_truth(guess: KeyGuess, truth: Sequence[int]) -> Optional[int]:
    """1-based candidate rank of the true key, or None when never enumerated."""
    wrong = {i for i, (g, t) in enumerate(zip(guess.bits, truth)) if int(g) != int(t)}
    order = candidate_order(guess)
    # candidate j flips exactly order[:j-1]
    if set(int(i) for i in order[: len(wrong)]) == wrong:
        return len(wrong) + 1
    return None


@dataclass(frozen=True)
class SuccessReport:
    order: int
    rate: float
    ranks: Tuple[Optional[int], ...]


def success_from_guesses(guesses: Sequence[KeyGuess], truth: Sequence[int], order: int) -> SuccessReport:
    if order < 1:
        raise ValueError("order must be >= 1")
    ranks = tuple(rank_of_truth(g, truth) for g in guesses)
    hits = sum(r is not None and r <= order for r in ranks)
    return SuccessReport(order, hits / len(ranks) if ranks else 0.0, ranks)


def success_rate(
    scenario: Scenario,
    order: Optional[int] = None,
    trials: Optional[int] = None,
    n_traces: Optional[int] = None,
) -> SuccessReport:
    order = scenario.experiment.success_order if order is None else order
    trials = scenario.experiment.trials if trials is None else trials
    n_traces = scenario.experiment.success_traces if n_traces is None else n_traces
    if order < 1 or trials < 1 or n_traces < 1:
        raise ValueError("order, trials and n_traces must be >= 1")
    engine = Engine(scenario)
    slots = slot_timing(scenario.schedule, engine.timing)
    guesses = []
    for trial in progress(range(trials), desc=f"success ({scenario.mode})", unit="trial"):
        traces, _ = simulate_traces(scenario, (scenario.experiment.seed, STREAM_SUCCESS, trial), n_traces, engine)
        guesses.append(extract_key(traces, slots))
    report = success_from_guesses(guesses, scenario.key.bits, order)
    log.info("success rate (order %d, %s): %.3f", order, scenario.mode, report.rate)
    return report


# ───────────────────────────── distribution ───────────────────────────
@dataclass(frozen=True)
class DistributionSummary:
    values: Tuple[int, ...]
    counts: Tuple[int, ...]
    mean: float
    std: float
    q1: float
    median: float
    q3: float

    @property
    def n(self) -> int:
        return sum(self.counts)


def distribution_summary(samples: np.ndarray) -> DistributionSummary:
    x = np.asarray(samples).ravel()
    if x.size == 0:
        raise ValueError("no samples to summarise")
    values, counts = np.unique(x.astype(np.int64), return_counts=True)
    q1, median, q3 = np.percentile(x, [25, 50, 75])
    return DistributionSummary(
        tuple(int(v) for v in values), tuple(int(c) for c in counts),
        float(x.mean()), float(x.std()), float(q1), float(median), float(q3),
    )


def distribution_for(scenario: Scenario, n_traces: Optional[int] = None) -> DistributionSummary:
    n_traces = scenario.experiment.traces if n_traces is None else n_traces
    traces, _ = simulate_traces(scenario, (scenario.experiment.seed, STREAM_DIST), n_traces)
    return distribution_summary(traces)


# ───────────────────────────── overhead ───────────────────────────────
COMPONENTS = ("victim", "monitor", "shield_bank", "random_bank")
DEFAULT_INVENTORIES: Dict[str, Tuple[str, ...]] = {
    "none": ("victim",),
    "random": ("victim", "random_bank"),
    "shield": ("victim", "monitor", "shield_bank"),
}


@dataclass(frozen=True)
class VariantOverhead:
    name: str
    ff: int
    defense_ff: int
    power_w: float
    defense_power_w: float


@dataclass(frozen=True)
class OverheadReport:
    variants: Tuple[VariantOverhead, ...]

    def variant(self, name: str) -> VariantOverhead:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(name)

    def ratio(self, name: str, base: str, what: str = "ff") -> float:
        """``what`` of *name* relative to *base* (``ff`` or ``power_w``)."""
        num = getattr(self.variant(name), what)
        den = getattr(self.variant(base), what)
        return num / den if den else math.inf


def component_ff(component: str, scenario: Scenario) -> int:
    o = scenario.overhead
    if component == "victim":
        return o.victim_ff
    if component == "monitor":
        return scenario.monitor.m * scenario.monitor.sensor.n_ff + o.ref_counter_width
    if component == "shield_bank":
        return scenario.defense.bank.s * o.shield_control_ff + o.bank_register_width
    if component == "random_bank":
        return scenario.defense.random.n_ros * o.random_tff_chain + o.lfsr_width
    raise ValueError(f"unknown component {component!r}; expected one of {', '.join(COMPONENTS)}")


def simulated_noise_power(scenario: Scenario, mode: str, n_traces: Optional[int] = None) -> float:
    """Time-averaged defense noise power over a standard run of *mode*."""
    if mode == "none":
        return 0.0
    sc = scenario.with_mode(mode)
    if mode == "shield":
        sc = ensure_calibrated(sc)
    n_traces = scenario.experiment.traces if n_traces is None else n_traces
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    total, count = 0.0, 0
    for batch in iter_batches(sc, (sc.experiment.seed, STREAM_OVERHEAD), n_traces):
        take = min(batch.size, n_traces - count)
        total += float(batch.noise_power[:take].sum())
        count += take
        if count >= n_traces:
            break
    return total / count


def component_power(component: str, scenario: Scenario, noise: Dict[str, float]) -> float:
    o = scenario.overhead
    if component == "victim":
        return float(power_series(scenario.schedule, scenario.n_ticks).mean())
    if component == "monitor":
        return scenario.monitor.m * scenario.monitor.self_power_per_ro + o.static_monitor_w
    if component == "shield_bank":
        return noise["shield"] + o.static_shield_w
    if component == "random_bank":
        return noise["random"] + o.static_random_w
    raise ValueError(f"unknown component {component!r}; expected one of {', '.join(COMPONENTS)}")


def overhead_report(
    scenario: Scenario,
    inventories: Optional[Dict[str, Sequence[str]]] = None,
    n_traces: Optional[int] = None,
) -> OverheadReport:
    inventories = inventories or DEFAULT_INVENTORIES
    for name, parts in inventories.items():
        for part in parts:
            if part not in COMPONENTS:
                raise ValueError(f"variant {name}: unknown component {part!r}")
    needed = {p for parts in inventories.values() for p in parts}
    noise = {
        "shield": simulated_noise_power(scenario, "shield", n_traces) if "shield_bank" in needed else 0.0,
        "random": simulated_noise_power(scenario, "random", n_traces) if "random_bank" in needed else 0.0,
    }
    variants = []
    for name, parts in inventories.items():
        ff = {p: component_ff(p, scenario) for p in parts}
        power = {p: component_power(p, scenario, noise) for p in parts}
        variants.append(VariantOverhead(
            name,
            ff=sum(ff.values()),
            defense_ff=sum(v for p, v in ff.items() if p != "victim"),
            power_w=sum(power.values()),
            defense_power_w=sum(v for p, v in power.items() if p != "victim"),
        ))
    return OverheadReport(tuple(variants))


# ───────────────────────────── reaction time ──────────────────────────
@dataclass(frozen=True)
class ReactionRow:
    f_ref: float
    reaction: ReactionTime
    theta0: float
    delta: float


def reaction_sweep(
    scenario: Scenario,
    frequencies: Optional[Sequence[float]] = None,
    n_traces: Optional[int] = None,
) -> List[ReactionRow]:
    """SHIELD reaction time per monitor sampling frequency, recalibrated at each."""
    frequencies = scenario.experiment.reaction_frequencies if frequencies is None else frequencies
    n_traces = scenario.experiment.traces if n_traces is None else n_traces
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    rows = []
    for f_ref in progress(frequencies, desc="reaction", unit="freq"):
        sc = scenario.with_monitor(f_ref=f_ref).with_mode("shield")
        cal = calibrate(sc)
        sc = sc.with_calibration(cal.theta0, cal.delta)
        batch = Engine(sc).simulate_batch((sc.experiment.seed, STREAM_REACTION), 0, 0, n_traces, record_events=n_traces)
        reaction = measure_reaction_time(batch.events)
        rows.append(ReactionRow(f_ref, reaction, cal.theta0, cal.delta))
        log.info("reaction @ %.0f MHz: %s", f_ref / 1e6, f"{reaction.mean:.3f}" if reaction.has_data else "no data")
    return rows
