import numpy as np
import pytest

from shieldsim.core.attacker import (
    SlotTiming, adaptive_threshold, attack, attack_effort, bit_errors, classify,
    extract_key, scenario_slots, slot_means,
)
from shieldsim.core.constants import STREAM_SIMULATE
from shieldsim.core.engine import simulate_traces
from shieldsim.core.errors import SimulationError


def _synthetic(bits, width=3, zero=100.0, one=90.0):
    trace = np.concatenate([np.full(width, one if b else zero) for b in bits])
    slots = SlotTiming(tuple((i * width, (i + 1) * width) for i in range(len(bits))))
    return trace, slots


def test_slot_mean_of_a_constant_trace():
    slots = SlotTiming(((0, 2), (2, 5), (5, 6)))
    assert list(slot_means(np.full(6, 42.0), slots)) == [42.0, 42.0, 42.0]


def test_slot_mean_by_hand():
    assert slot_means(np.array([10, 20, 10, 20]), SlotTiming(((0, 4),)))[0] == 15.0


def test_slot_means_keep_leading_axes():
    samples = np.array([[1, 1, 3, 3], [2, 2, 4, 4]])
    out = slot_means(samples, SlotTiming(((0, 2), (2, 4))))
    assert out.tolist() == [[1.0, 3.0], [2.0, 4.0]]


def test_empty_slot_names_the_bit():
    with pytest.raises(SimulationError, match="bit 1"):
        slot_means(np.ones(4), SlotTiming(((0, 2), (2, 2), (2, 4))))


def test_slots_past_the_trace():
    with pytest.raises(ValueError):
        slot_means(np.ones(3), SlotTiming(((0, 4),)))


def test_slots_must_not_overlap():
    with pytest.raises(ValueError):
        SlotTiming(((0, 4), (2, 6)))


@pytest.mark.parametrize("means, theta", [([10, 10, 20, 20], 15.0), ([0, 100], 50.0)])
def test_adaptive_threshold(means, theta):
    th = adaptive_threshold(means)
    assert th.value == pytest.approx(theta)
    assert not th.degenerate


def test_identical_means_are_degenerate():
    th = adaptive_threshold([7, 7, 7])
    assert th.degenerate
    assert classify(np.array([7.0, 7.0, 7.0])).bits == (0, 0, 0)


def test_threshold_ignores_order():
    means = [3.0, 9.5, 4.1, 10.2, 8.8, 2.7, 9.9]
    rng = np.random.default_rng(2)
    expected = adaptive_threshold(means).value
    for _ in range(5):
        assert adaptive_threshold(list(rng.permutation(means))).value == pytest.approx(expected)


def test_threshold_with_unequal_clusters():
    th = adaptive_threshold([1, 1, 1, 1, 1, 1, 10])
    assert th.value == pytest.approx(5.5)


def test_low_slots_read_as_ones():
    bits = (1, 0, 1, 1, 0, 0, 1, 0)
    trace, slots = _synthetic(bits)
    guess = extract_key(trace, slots)
    assert guess.bits == bits
    assert all(m == pytest.approx(5.0) for m in guess.margins)


def test_inverted_leakage_reads_the_complement():
    bits = (1, 0, 1, 1, 0, 0, 1, 0)
    trace, slots = _synthetic(bits, zero=90.0, one=100.0)
    assert extract_key(trace, slots).bits == tuple(1 - b for b in bits)


def test_averaging_recovers_a_noisy_key():
    bits = tuple(int(b) for b in np.random.default_rng(4).integers(0, 2, 32))
    clean, slots = _synthetic(bits, width=4)
    noisy = clean + np.random.default_rng(5).normal(0, 20, size=(400, clean.size))
    assert extract_key(noisy, slots).bits == bits


def test_bit_errors():
    assert bit_errors((1, 0, 1), (1, 1, 0)) == 2
    with pytest.raises(ValueError):
        bit_errors((1,), (1, 0))


def test_attack_with_tolerance():
    bits = (1, 0, 1, 1, 0, 0, 1, 0)
    trace, slots = _synthetic(bits)
    wrong = (0,) + bits[1:]
    assert not attack(trace, slots, wrong).success
    result = attack(trace, slots, wrong, tolerance=1)
    assert result.success
    assert result.bit_errors == 1
    assert result.traces_used == 1


def test_scenario_slots_follow_the_schedule(small_cfg):
    sc = small_cfg.scenario
    slots = scenario_slots(sc)
    assert slots.n == sc.key.n
    assert all(hi > lo for lo, hi in slots.bounds)


def test_unprotected_key_falls_quickly(small_cfg):
    report = attack_effort(small_cfg.scenario, trials=2, n_max=40)
    assert report.saturated == 0
    assert all(r.success for r in report.trials)
    assert 1 <= report.mean_traces <= 40


def test_effort_does_not_depend_on_worker_count(small_cfg):
    one = attack_effort(small_cfg.scenario, trials=3, n_max=20, workers=1)
    three = attack_effort(small_cfg.scenario, trials=3, n_max=20, workers=3)
    assert [r.traces_used for r in one.trials] == [r.traces_used for r in three.trials]


@pytest.mark.slow
def test_effort_is_capped_at_n_max(make_config):
    sc = make_config(defense={"mode": "shield", "auto_calibrate": True}).scenario
    report = attack_effort(sc, trials=2, n_max=1)
    assert all(r.traces_used == 1 for r in report.trials)
    assert report.mean_traces == 1.0
    assert report.n_max == 1


def test_trace_order_does_not_change_the_guess():
    bits = tuple(int(b) for b in np.random.default_rng(8).integers(0, 2, 24))
    clean, slots = _synthetic(bits, width=4)
    noisy = clean + np.random.default_rng(9).normal(0, 6, size=(20, clean.size))
    expected = extract_key(noisy, slots)
    rng = np.random.default_rng(10)
    for _ in range(5):
        guess = extract_key(noisy[rng.permutation(20)], slots)
        assert guess.bits == expected.bits
        assert guess.threshold.value == pytest.approx(expected.threshold.value)


def test_zero_trials_are_rejected(small_cfg):
    with pytest.raises(ValueError):
        attack_effort(small_cfg.scenario, trials=0)
    with pytest.raises(ValueError):
        attack_effort(small_cfg.scenario, n_max=0)


@pytest.mark.slow
def test_close_monitor_beats_a_far_one(make_config):
    sc = make_config(victim={"n_bits": 128}).scenario
    errors = {}
    for placement in ("close2", "far"):
        moved = sc.with_monitor(placement=placement)
        slots = scenario_slots(moved)
        traces, _ = simulate_traces(moved, (3, STREAM_SIMULATE), 16)
        errors[placement] = np.mean([bit_errors(extract_key(t, slots).bits, sc.key.bits) for t in traces])
    assert errors["close2"] < errors["far"]


@pytest.mark.slow
def test_more_traces_never_hurt_on_average(make_config):
    sc = make_config(victim={"n_bits": 64}, monitor={"placement": "far"}).scenario
    slots = scenario_slots(sc)
    traces, _ = simulate_traces(sc, (4, STREAM_SIMULATE), 400)
    mean_errors = []
    for n in (1, 2, 4, 8):
        groups = traces[: (400 // n) * n].reshape(-1, n, traces.shape[1])[:50]
        mean_errors.append(np.mean([bit_errors(extract_key(g, slots).bits, sc.key.bits) for g in groups]))
    assert all(b <= a for a, b in zip(mean_errors, mean_errors[1:]))
