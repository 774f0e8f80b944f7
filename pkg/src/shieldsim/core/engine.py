"""
Lock-step trace simulator.

A batch of B traces is advanced over the same tick grid.  Per sample window
the per-tick, per-RO supply voltage (the PDN closed form with all sources
superposed) is integrated into oscillations, jittered, dithered by the clock
phase, saturated, and averaged over the m counters.  Open-loop runs are
evaluated a block of samples at a time; SHIELD closes the loop sample by
sample, each decision switching the noise bank at the first tick boundary
after the following sample.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .constants import BATCH_MAX, BATCH_SCHEDULE, SAMPLE_BLOCK, STREAM_SIMULATE
from .defense import ControllerEvent, classify_transition, shield_step_batch
from .monitor import Trace, monitor_samples, ro_counts
from .pdn import attenuation_matrix, drop_signal
from .scenario import Scenario
from .victim import power_series

log = logging.getLogger(__name__)

_EPS = 1e-9

VictimPowerFn = Callable[[int, int], np.ndarray]


def make_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in key)]))


# ─────────────────────────────── timing ───────────────────────────────
@dataclass(frozen=True)
class SampleTiming:
    n_ticks: int
    tick_period: float
    sample_period: float
    tick_idx: np.ndarray          # (S, K) ticks overlapping each window
    tick_w: np.ndarray            # (S, K) overlap in seconds, 0 for padding
    effect_tick: np.ndarray       # (S,) tick from which decision t is applied
    effect_sample: np.ndarray     # (S,) first sample fully under decision t
    decision_of_tick: np.ndarray  # (n_ticks,) latest decision in force, -1 = none
    sample_of_tick: np.ndarray    # (n_ticks,) window holding the tick start

    @property
    def n_samples(self) -> int:
        return self.tick_idx.shape[0]

    def samples_in(self, lo_tick: int, hi_tick: int) -> Tuple[int, int]:
        """Samples whose window starts inside ticks ``[lo_tick, hi_tick)``."""
        ratio = self.sample_period / self.tick_period
        first = math.ceil(lo_tick / ratio - _EPS)
        last = math.ceil(hi_tick / ratio - _EPS)
        return min(first, self.n_samples), min(last, self.n_samples)


def build_timing(n_ticks: int, tick_period: float, sample_period: float) -> SampleTiming:
    if n_ticks < 1:
        raise ValueError("need at least one tick")
    ratio = sample_period / tick_period            # ticks per sample
    n_samples = int(math.floor(n_ticks / ratio + _EPS))
    if n_samples < 1:
        raise ValueError("the sample window is longer than the whole run")
    starts = np.arange(n_samples) * ratio
    ends = starts + ratio
    first = np.floor(starts + _EPS).astype(np.int64)
    last = np.ceil(ends - _EPS).astype(np.int64) - 1
    width = int((last - first).max()) + 1
    idx = first[:, None] + np.arange(width)[None, :]
    overlap = np.minimum(idx + 1, ends[:, None]) - np.maximum(idx, starts[:, None])
    overlap = np.where(idx <= last[:, None], np.clip(overlap, 0.0, None), 0.0)
    idx = np.minimum(idx, n_ticks - 1)

    # decision taken at the end of sample t, applied after sample t+1 ends
    effect_tick = np.ceil((np.arange(n_samples) + 2) * ratio - _EPS).astype(np.int64)
    effect_sample = np.ceil(effect_tick / ratio - _EPS).astype(np.int64)
    ticks = np.arange(n_ticks)
    decision_of_tick = np.searchsorted(effect_tick, ticks, side="right") - 1
    sample_of_tick = np.minimum(np.floor(ticks / ratio + _EPS).astype(np.int64), n_samples - 1)
    return SampleTiming(
        n_ticks, tick_period, sample_period, idx, overlap * tick_period,
        effect_tick, effect_sample, decision_of_tick, sample_of_tick,
    )


# ─────────────────────────────── batches ──────────────────────────────
@dataclass
class TraceBatch:
    index: int
    start: int                       # global index of the first trace
    samples: np.ndarray              # (B, S) averaged counts
    noise_power: np.ndarray          # (B,) time-averaged defense noise power
    decisions: Optional[np.ndarray] = None   # (B, S) active sets after each sample
    events: List[ControllerEvent] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.samples.shape[0]


def batch_plan(n_traces: int) -> List[Tuple[int, int, int]]:
    """``(batch_index, start, size)`` covering at least *n_traces* traces."""
    plan, start, i = [], 0, 0
    while start < n_traces:
        size = BATCH_SCHEDULE[i] if i < len(BATCH_SCHEDULE) else BATCH_MAX
        plan.append((i, start, size))
        start += size
        i += 1
    return plan


# ─────────────────────────────── engine ───────────────────────────────
class Engine:
    """Precomputes everything that is shared by all traces of a scenario."""

    def __init__(self, scenario: Scenario, n_ticks: Optional[int] = None) -> None:
        self.scenario = scenario
        sc = scenario
        self.n_ticks = sc.n_ticks if n_ticks is None else n_ticks
        self.timing = build_timing(self.n_ticks, sc.pdn.tick_period, sc.monitor.sample_period)
        self.window = sc.monitor.sample_period

        ros = sc.monitor.ro_locations
        lam = sc.pdn.lam
        self.a_victim = attenuation_matrix(ros, [sc.victim.location], lam)[:, 0]
        self.a_bank = attenuation_matrix(ros, [sc.defense.bank.location], lam)[:, 0]
        self.a_random = attenuation_matrix(ros, [sc.defense.random.location], lam)[:, 0]
        self.a_tenants = (
            attenuation_matrix(ros, [t.location for t in sc.tenants], lam)
            if sc.tenants else np.zeros((len(ros), 0))
        )
        # the monitor's own ROs draw a constant load; steady state, no dI/dt
        self_current = sc.monitor.self_power_per_ro / sc.pdn.v_nom
        self.self_drop = attenuation_matrix(ros, ros, lam).sum(axis=1) * sc.pdn.r_eff * self_current

        victim_power = power_series(sc.schedule, self.n_ticks)
        self.victim_power = victim_power
        self.g_victim = drop_signal(victim_power, sc.pdn)[None, :]

    # ── public ───────────────────────────────────────────────────────
    def simulate_batch(
        self,
        key: Sequence[int],
        batch_index: int,
        start: int,
        size: int,
        victim_power: Optional[np.ndarray] = None,
        forced_k: Optional[int] = None,
        record_events: int = 0,
    ) -> TraceBatch:
        """
        Simulate *size* traces.  *key* (seed first) names the random stream;
        identical ``(key, batch_index, size)`` give bit-identical traces.
        """
        sc = self.scenario
        seed = key[0]
        stream = tuple(key[1:])
        timing = self.timing
        n_samples = timing.n_samples

        g_victim = self.g_victim if victim_power is None else drop_signal(victim_power, sc.pdn)
        open_loop: List[Tuple[np.ndarray, np.ndarray]] = [(self.a_victim, g_victim)]
        noise_power = np.zeros(size)

        if sc.mode == "random":
            cfg = sc.defense.random
            draws = make_rng(seed, *stream, batch_index, 1).binomial(cfg.n_ros, cfg.duty, size=(size, n_samples))
            p_random = draws[:, timing.sample_of_tick] * cfg.p_per_ro
            open_loop.append((self.a_random, drop_signal(p_random, sc.pdn)))
            noise_power = p_random.mean(axis=1)

        for j, tenant in enumerate(sc.tenants):
            rng = make_rng(seed, *stream, batch_index, 2, j)
            p_tenant = np.clip(rng.normal(tenant.p_mean, tenant.p_std, size=(size, self.n_ticks)), 0.0, None)
            open_loop.append((self.a_tenants[:, j], drop_signal(p_tenant, sc.pdn)))

        if forced_k is not None:
            p_bank = np.full((1, self.n_ticks), forced_k * sc.defense.bank.p_set)
            open_loop.append((self.a_bank, drop_signal(p_bank, sc.pdn)))
            noise_power = noise_power + forced_k * sc.defense.bank.p_set

        if sc.mode == "shield" and forced_k is None:
            return self._closed_loop(seed, stream, batch_index, start, size, open_loop, record_events)

        samples = np.empty((size, n_samples), dtype=np.int64)
        for block, a in enumerate(range(0, n_samples, SAMPLE_BLOCK)):
            b = min(a + SAMPLE_BLOCK, n_samples)
            z, phase = self._block_noise(seed, stream, batch_index, block, size)
            osc = self._oscillations(a, b, open_loop, size)
            samples[:, a:b] = self._count(osc, z[..., : b - a], phase[..., : b - a])
        return TraceBatch(batch_index, start, samples, noise_power)

    # ── internals ────────────────────────────────────────────────────
    def _block_noise(self, seed, stream, batch_index, block, size):
        rng = make_rng(seed, *stream, batch_index, 0, block)
        z = rng.standard_normal((size, self.scenario.monitor.m, SAMPLE_BLOCK))
        # all counters of a sample share the reference clock, hence one phase
        return z, rng.random((size, 1, SAMPLE_BLOCK))

    def _oscillations(self, a: int, b: int, sources, size: int, extra=None) -> np.ndarray:
        """RO oscillations per window for samples ``[a, b)``: shape (B, m, n)."""
        sc = self.scenario
        idx = self.timing.tick_idx[a:b]
        w = self.timing.tick_w[a:b]
        lo, hi = int(idx.min()), int(idx.max()) + 1
        drop = np.broadcast_to(self.self_drop[None, :, None], (size, len(self.self_drop), hi - lo)).copy()
        for atten, g in sources:
            drop += atten[None, :, None] * g[:, None, lo:hi]
        if extra is not None:
            atten, g = extra
            drop += atten[None, :, None] * g[:, None, :]
        volts = np.clip(sc.pdn.v_nom - drop, 0.0, None)
        freq = sc.monitor.sensor.k * volts + sc.monitor.sensor.f0
        return np.einsum("bmnk,nk->bmn", freq[:, :, idx - lo], w)

    def _count(self, osc: np.ndarray, z: np.ndarray, phase: np.ndarray) -> np.ndarray:
        sensor = self.scenario.monitor.sensor
        if sensor.cycle_jitter > 0:
            # accumulated period jitter grows with the square root of the count
            osc = osc + sensor.cycle_jitter * np.sqrt(np.maximum(osc, 0.0)) * z
        return monitor_samples(ro_counts(osc, phase, sensor.n_ff))

    def _closed_loop(self, seed, stream, batch_index, start, size, open_loop, record_events) -> TraceBatch:
        sc = self.scenario
        timing = self.timing
        n_samples = timing.n_samples
        bank = sc.defense.bank
        ctl = sc.defense.controller()
        pdn = sc.pdn

        # column 0 = "no decision yet"; decision t is stored in column t + 1
        decided = np.zeros((size, n_samples + 1), dtype=np.int64)
        samples = np.empty((size, n_samples), dtype=np.int64)
        k = np.zeros(size, dtype=np.int64)
        events: List[ControllerEvent] = []

        z = phase = None
        for t in range(n_samples):
            off = t % SAMPLE_BLOCK
            if off == 0:
                z, phase = self._block_noise(seed, stream, batch_index, t // SAMPLE_BLOCK, size)
            idx = timing.tick_idx[t]
            lo, hi = int(idx.min()), int(idx.max()) + 1
            span = np.arange(max(lo - 1, 0), hi)
            p_bank = decided[:, timing.decision_of_tick[span] + 1] * bank.p_set
            g_bank = drop_signal(p_bank, pdn)[:, span >= lo]
            osc = self._oscillations(t, t + 1, open_loop, size, extra=(self.a_bank, g_bank))
            sample = self._count(osc, z[..., off:off + 1], phase[..., off:off + 1])[:, 0]
            samples[:, t] = sample

            new_k = shield_step_batch(k, sample, ctl.theta0, ctl.delta, ctl.s)
            if record_events:
                events.extend(self._events(t, k[:record_events], new_k[:record_events], start))
            k = new_k
            decided[:, t + 1] = k

        applied = decided[:, timing.decision_of_tick + 1]
        noise_power = applied.mean(axis=1) * bank.p_set
        return TraceBatch(batch_index, start, samples, noise_power, decided[:, 1:].astype(np.int8), events)

    def _events(self, t: int, before: np.ndarray, after: np.ndarray, start: int) -> List[ControllerEvent]:
        ctl = self.scenario.defense
        out = []
        for row in np.nonzero(before != after)[0]:
            kind = classify_transition(int(before[row]), int(after[row]))
            if kind is None:
                continue
            out.append(ControllerEvent(
                sample_index=t,
                event=kind,
                active_k=int(after[row]),
                threshold=ctl.theta0 - int(after[row]) * ctl.delta,
                trace=start + int(row),
                effect_index=int(self.timing.effect_sample[t]) if kind == "DETECT" else None,
            ))
        return out


# ─────────────────────────── convenience API ──────────────────────────
def iter_batches(
    scenario: Scenario,
    key: Sequence[int],
    n_traces: int,
    engine: Optional[Engine] = None,
    victim_power_fn: Optional[VictimPowerFn] = None,
    record_events: int = 0,
) -> Iterator[TraceBatch]:
    """
    Yield batches covering *n_traces*; callers may stop early.  Events are
    kept for the first *record_events* traces of every batch.
    """
    engine = engine or Engine(scenario)
    for batch_index, start, size in batch_plan(n_traces):
        victim_power = victim_power_fn(start, size) if victim_power_fn else None
        yield engine.simulate_batch(
            key, batch_index, start, size,
            victim_power=victim_power,
            record_events=record_events,
        )


def simulate_traces(
    scenario: Scenario,
    key: Sequence[int],
    n_traces: int,
    engine: Optional[Engine] = None,
    victim_power_fn: Optional[VictimPowerFn] = None,
    record_events: int = 0,
) -> Tuple[np.ndarray, List[TraceBatch]]:
    """Exactly *n_traces* traces ``(n, S)`` plus the batches they came from."""
    batches = list(iter_batches(scenario, key, n_traces, engine, victim_power_fn, record_events))
    samples = np.concatenate([b.samples for b in batches], axis=0)[:n_traces]
    return samples, batches


def run_monitor(
    scenario: Scenario,
    ticks: Optional[int] = None,
    stream: int = STREAM_SIMULATE,
    trace_index: int = 0,
) -> Trace:
    """One monitor trace of the scenario, as the attacker would record it."""
    engine = Engine(scenario, n_ticks=ticks)
    samples, _ = simulate_traces(scenario, (scenario.experiment.seed, stream), trace_index + 1, engine)
    return Trace(
        samples[trace_index],
        scenario.monitor.sample_period,
        trace_metadata(scenario),
    )


def trace_metadata(scenario: Scenario, config_hash: Optional[str] = None) -> dict:
    return {
        "scenario": scenario.experiment.name,
        "seed": str(scenario.experiment.seed),
        "config_hash": config_hash or scenario.monitor.digest(),
        "sample_period": repr(scenario.monitor.sample_period),
        "mode": scenario.mode,
    }
