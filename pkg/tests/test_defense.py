import numpy as np
import pytest

from shieldsim.core.defense import (
    IDLE, RAMPING, ControllerEvent, NoiseGenBank, RandomNoiseConfig, ShieldController,
    classify_transition, measure_reaction_time, noise_power, random_noise_draws,
    random_noise_step, shield_step, shield_step_batch,
)


def test_idle_below_threshold_is_a_no_op():
    ctl, k = shield_step(ShieldController(theta0=100, delta=2, s=4), 95)
    assert (ctl.state, k) == (IDLE, 0)


def test_idle_above_threshold_starts_ramping():
    ctl, k = shield_step(ShieldController(theta0=100, delta=2, s=4), 105)
    assert (ctl.state, k) == (RAMPING, 1)
    assert ctl.threshold == 98


def test_full_walk():
    ctl = ShieldController(theta0=100, delta=2, s=3)
    seen = []
    for sample in [95, 105, 99, 97, 95, 95, 105, 90]:
        ctl, k = shield_step(ctl, sample)
        seen.append((ctl.state, k))
    assert seen == [
        (IDLE, 0),
        (RAMPING, 1),
        (RAMPING, 2),
        (RAMPING, 3),
        (IDLE, 0),       # bank full: the next sample resets
        (IDLE, 0),
        (RAMPING, 1),
        (IDLE, 0),       # victim active again
    ]


def test_sample_equal_to_threshold_resets():
    ctl = ShieldController(theta0=100, delta=2, s=3, active_k=1, state=RAMPING)
    ctl, k = shield_step(ctl, 98)
    assert (ctl.state, k) == (IDLE, 0)


def test_controller_invariant():
    with pytest.raises(ValueError):
        ShieldController(theta0=100, delta=2, s=3, active_k=1, state=IDLE)
    with pytest.raises(ValueError):
        ShieldController(theta0=100, delta=2, s=3, active_k=4, state=RAMPING)


def test_batch_step_agrees_with_scalar_step():
    rng = np.random.default_rng(3)
    k = np.zeros(64, dtype=np.int64)
    ctls = [ShieldController(theta0=100, delta=2, s=3) for _ in range(64)]
    for _ in range(30):
        samples = rng.integers(90, 110, size=64)
        k = shield_step_batch(k, samples, 100, 2, 3)
        stepped = [shield_step(c, int(x)) for c, x in zip(ctls, samples)]
        ctls = [c for c, _ in stepped]
        assert list(k) == [kk for _, kk in stepped]


@pytest.mark.parametrize("before, after, event", [
    (0, 1, "DETECT"), (1, 2, "RAMP"), (3, 0, "RESET"), (0, 0, None),
])
def test_classify_transition(before, after, event):
    assert classify_transition(before, after) == event


def test_noise_power():
    bank = NoiseGenBank(s=4, p_set=0.025)
    assert noise_power(0, bank) == 0
    assert noise_power(2, bank) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        noise_power(5, bank)


def test_full_bank_matches_multiply_power():
    p_mult = 0.1
    bank = NoiseGenBank(s=3, p_set=p_mult / 3)
    assert noise_power(3, bank) == pytest.approx(p_mult)
    assert bank.within_budget(p_mult)
    assert not NoiseGenBank(s=3, p_set=0.04).within_budget(p_mult)


def test_random_noise_extremes():
    rng = np.random.default_rng(0)
    assert all(random_noise_step(RandomNoiseConfig(10, 0.01, 0.0), rng) == 0 for _ in range(50))
    assert all(random_noise_step(RandomNoiseConfig(10, 0.01, 1.0), rng) == 10 for _ in range(50))


def test_random_noise_mean():
    draws = random_noise_draws(RandomNoiseConfig(100, 0.01, 0.5), np.random.default_rng(11), 10_000)
    assert 48 <= draws.mean() <= 52


def test_random_noise_duty_range():
    with pytest.raises(ValueError):
        RandomNoiseConfig(10, 0.01, 1.5)


def test_reaction_time():
    one = [ControllerEvent(10, "DETECT", 1, 100.0, effect_index=12)]
    assert measure_reaction_time(one).mean == 2.0
    two = one + [
        ControllerEvent(11, "RAMP", 2, 98.0, effect_index=13),
        ControllerEvent(30, "DETECT", 1, 100.0, effect_index=34),
    ]
    assert measure_reaction_time(two).mean == 3.0
    assert measure_reaction_time(two).events == 2


def test_reaction_time_without_events():
    result = measure_reaction_time([])
    assert result.mean is None
    assert not result.has_data


@pytest.mark.slow
def test_noise_never_exceeds_the_multiply_budget():
    p_mult, s = 2.4, 4
    bank = NoiseGenBank(s=s, p_set=p_mult / s)
    rng = np.random.default_rng(21)
    k = np.zeros(1000, dtype=np.int64)
    for _ in range(1000):
        k = shield_step_batch(k, rng.uniform(90.0, 110.0, size=k.size), 100.0, 1.5, s)
        assert k.min() >= 0 and k.max() <= s
        assert (k * bank.p_set).max() <= p_mult * (1 + 1e-12)
    assert bank.within_budget(p_mult)


def test_ramp_never_runs_past_the_bank():
    # a silent victim keeps every sample above threshold
    ctl = ShieldController(theta0=100, delta=1, s=4)
    ks = []
    for _ in range(12):
        ctl, k = shield_step(ctl, 200)
        ks.append(k)
    assert max(ks) == 4
    assert ks[:6] == [1, 2, 3, 4, 0, 1]
