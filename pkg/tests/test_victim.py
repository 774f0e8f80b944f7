import numpy as np
import pytest

from shieldsim.core.victim import (
    RsaKey, VictimPowerParams, bits_to_int, build_power_schedule, decrypt, encrypt,
    generate_key, int_to_bits, key_from_hex, key_to_hex, modexp, power_series,
    random_message, victim_power_at,
)

PARAMS = VictimPowerParams(p_square=0.05, p_mult=0.1, p_idle=0.01, t_square=4, t_mult=4)


@pytest.mark.parametrize("m, d, n, expected", [
    (7, 0, 13, 1),
    (7, 1, 13, 7),
    (4, 13, 497, 445),
    (65, 17, 3233, 2790),
])
def test_modexp(m, d, n, expected):
    assert modexp(m, d, n) == expected
    assert modexp(m, d, n) == pow(m, d, n)


def test_modexp_accepts_bit_sequences():
    assert modexp(4, (1, 0, 1, 1), 497) == 445


@pytest.mark.parametrize("m, n", [(13, 13), (-1, 13), (0, 1)])
def test_modexp_rejects_bad_operands(m, n):
    with pytest.raises(ValueError):
        modexp(m, 3, n)


def test_textbook_rsa_round_trip():
    key = RsaKey(int_to_bits(2753, 12), 3233)
    c = encrypt(65, 17, 3233)
    assert c == 2790
    assert decrypt(c, key) == 65


def test_bit_helpers():
    assert int_to_bits(0b101, 4) == (1, 0, 1, 0)
    assert bits_to_int((1, 0, 1, 0)) == 5
    with pytest.raises(ValueError):
        int_to_bits(16, 4)


def test_hex_round_trip():
    key = key_from_hex("ac1", "c9f", 12)
    assert key.exponent == 0xAC1
    assert key.modulus == 0xC9F
    assert key_to_hex(key) == "ac1"


def test_key_validation():
    with pytest.raises(ValueError):
        RsaKey((), 13)
    with pytest.raises(ValueError):
        RsaKey((1, 2), 13)
    with pytest.raises(ValueError):
        RsaKey((1,), 1)


def test_victim_params_order():
    with pytest.raises(ValueError):
        VictimPowerParams(p_square=0.2, p_mult=0.1, p_idle=0.0, t_square=4, t_mult=4)
    with pytest.raises(ValueError):
        VictimPowerParams(p_square=0.05, p_mult=0.1, p_idle=0.0, t_square=0, t_mult=4)


def test_zero_contrast_victim_is_accepted_but_does_not_leak():
    params = VictimPowerParams(p_square=0.1, p_mult=0.1, p_idle=0.0, t_square=4, t_mult=4)
    assert not params.leaks
    assert PARAMS.leaks


def test_schedule_for_a_zero_bit():
    sched = build_power_schedule(RsaKey((0,), 13), PARAMS)
    assert [(s.duration, s.watts, s.bit) for s in sched.segments] == [(4, 0.05, 0)]


def test_schedule_for_a_one_bit():
    sched = build_power_schedule(RsaKey((1,), 13), PARAMS)
    assert [(s.duration, s.watts, s.bit) for s in sched.segments] == [(4, 0.1, 0), (4, 0.05, 0)]


def test_schedule_for_0b101():
    sched = build_power_schedule(RsaKey(int_to_bits(0b101, 3), 13), PARAMS)
    assert sched.total_ticks == 20
    assert [s.bit for s in sched.segments if s.watts == PARAMS.p_mult] == [0, 2]
    assert sched.slot_bounds() == [(0, 8), (8, 12), (12, 20)]
    mask = sched.mult_ticks()
    assert list(np.flatnonzero(mask)) == [0, 1, 2, 3, 12, 13, 14, 15]


def test_victim_power_at():
    sched = build_power_schedule(RsaKey((1,), 13), PARAMS)
    assert victim_power_at(sched, 0) == PARAMS.p_mult
    assert victim_power_at(sched, 4) == PARAMS.p_square
    assert victim_power_at(sched, sched.total_ticks + 5) == PARAMS.p_idle
    with pytest.raises(ValueError):
        victim_power_at(sched, -1)


def test_power_series_agrees_with_point_lookup():
    sched = build_power_schedule(RsaKey(int_to_bits(0b1101, 4), 13), PARAMS)
    series = power_series(sched, sched.total_ticks + 6)
    assert list(series) == [victim_power_at(sched, t) for t in range(sched.total_ticks + 6)]
    assert len(power_series(sched, 3)) == 3


def test_generate_key_is_seeded():
    a = generate_key(64, np.random.default_rng(5))
    b = generate_key(64, np.random.default_rng(5))
    assert a == b
    assert a.n == 64
    assert a.bits[-1] == 1
    assert a.modulus % 2 == 1


def test_random_message_below_modulus():
    rng = np.random.default_rng(1)
    assert all(0 <= random_message(3233, rng) < 3233 for _ in range(200))


@pytest.mark.slow
def test_modexp_agrees_with_builtin_pow_on_random_instances():
    rng = np.random.default_rng(1000)
    for _ in range(1000):
        n = max(int.from_bytes(rng.bytes(16), "little"), 2)
        m = int.from_bytes(rng.bytes(16), "little") % n
        d = int.from_bytes(rng.bytes(8), "little") >> int(rng.integers(0, 64))
        assert modexp(m, d, n) == pow(m, d, n)
