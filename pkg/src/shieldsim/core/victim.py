"""
RSA victim: square-and-multiply modular exponentiation, both as a function
and as the power schedule it draws from the shared PDN.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from .pdn import Location

log = logging.getLogger(__name__)

Bits = Tuple[int, ...]


# ─────────────────────────────── types ────────────────────────────────
@dataclass(frozen=True)
class RsaKey:
    bits: Bits          # private exponent, LSB first
    modulus: int

    def __post_init__(self) -> None:
        if len(self.bits) < 1:
            raise ValueError("key needs at least one bit")
        if self.modulus < 2:
            raise ValueError("modulus must be >= 2")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("key bits must be 0 or 1")

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def exponent(self) -> int:
        return bits_to_int(self.bits)


@dataclass(frozen=True)
class VictimPowerParams:
    p_square: float
    p_mult: float
    p_idle: float
    t_square: int
    t_mult: int
    location: Location = (0, 0)

    def __post_init__(self) -> None:
        # p_mult == p_square is valid (a victim without leakage); only calibration rejects it
        if not (self.p_mult >= self.p_square >= self.p_idle >= 0):
            raise ValueError("victim powers must satisfy p_mult >= p_square >= p_idle >= 0")
        if self.t_square < 1 or self.t_mult < 1:
            raise ValueError("t_square and t_mult must be >= 1 tick")

    @property
    def leaks(self) -> bool:
        """A multiply draws more than a square, so 1-bits are visible."""
        return self.p_mult > self.p_square


@dataclass(frozen=True)
class Segment:
    duration: int
    watts: float
    bit: int


@dataclass(frozen=True)
class PowerSchedule:
    segments: Tuple[Segment, ...]
    p_idle: float = 0.0

    @property
    def total_ticks(self) -> int:
        return sum(s.duration for s in self.segments)

    def slot_bounds(self) -> List[Tuple[int, int]]:
        """Tick range ``[start, end)`` covered by every key bit, in bit order."""
        bounds: dict[int, List[int]] = {}
        t = 0
        for seg in self.segments:
            lo_hi = bounds.setdefault(seg.bit, [t, t])
            lo_hi[1] = t + seg.duration
            t += seg.duration
        return [tuple(bounds[i]) for i in sorted(bounds)]

    def mult_ticks(self) -> np.ndarray:
        """Boolean mask over ticks that belong to multiply segments."""
        mask = np.zeros(self.total_ticks, dtype=bool)
        t = 0
        for seg, nxt in zip(self.segments, self.segments[1:] + (None,)):
            # a bit owning two segments emits the multiply first
            if nxt is not None and nxt.bit == seg.bit:
                mask[t:t + seg.duration] = True
            t += seg.duration
        return mask


# ───────────────────────────── helpers ────────────────────────────────
def int_to_bits(value: int, n_bits: int) -> Bits:
    if value < 0:
        raise ValueError("exponent must be non-negative")
    if value >> n_bits:
        raise ValueError(f"exponent needs more than {n_bits} bits")
    return tuple((value >> i) & 1 for i in range(n_bits))


def bits_to_int(bits: Sequence[int]) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


def key_from_hex(key_hex: str, modulus_hex: str, n_bits: int) -> RsaKey:
    return RsaKey(int_to_bits(int(key_hex, 16), n_bits), int(modulus_hex, 16))


def key_to_hex(key: RsaKey) -> str:
    return format(key.exponent, "x")


def generate_key(n_bits: int, rng: np.random.Generator) -> RsaKey:
    """Random n-bit exponent (top bit set) with a random odd modulus."""
    bits = [int(b) for b in rng.integers(0, 2, size=n_bits)]
    bits[-1] = 1
    mod_bits = [int(b) for b in rng.integers(0, 2, size=max(n_bits, 2))]
    mod_bits[0] = 1
    mod_bits[-1] = 1
    return RsaKey(tuple(bits), bits_to_int(mod_bits))


def random_message(modulus: int, rng: np.random.Generator) -> int:
    raw = bits_to_int(int(b) for b in rng.integers(0, 2, size=modulus.bit_length()))
    return raw % modulus


# ───────────────────────────── operations ─────────────────────────────
def modexp(message: int, d: Union[Sequence[int], int], modulus: int) -> int:
    """Right-to-left square-and-multiply: per bit multiply on 1, then square."""
    if modulus < 2:
        raise ValueError(f"modulus must be >= 2, got {modulus}")
    if not 0 <= message < modulus:
        raise ValueError("message must satisfy 0 <= M < N")
    bits = int_to_bits(d, max(d.bit_length(), 1)) if isinstance(d, int) else d
    result, square = 1, message
    for bit in bits:
        if bit:
            result = (result * square) % modulus
        square = (square * square) % modulus
    return result


def encrypt(message: int, e: int, modulus: int) -> int:
    return modexp(message, e, modulus)


def decrypt(ciphertext: int, key: RsaKey) -> int:
    return modexp(ciphertext, key.bits, key.modulus)


def build_power_schedule(key: RsaKey, params: VictimPowerParams) -> PowerSchedule:
    segments: List[Segment] = []
    for i, bit in enumerate(key.bits):
        if bit:
            segments.append(Segment(params.t_mult, params.p_mult, i))
        segments.append(Segment(params.t_square, params.p_square, i))
    return PowerSchedule(tuple(segments), params.p_idle)


def victim_power_at(schedule: PowerSchedule, tick: int) -> float:
    """Power drawn at *tick*; a boundary tick belongs to the later segment."""
    if tick < 0:
        raise ValueError("tick must be >= 0")
    t = 0
    for seg in schedule.segments:
        if tick < t + seg.duration:
            return seg.watts
        t += seg.duration
    return schedule.p_idle


def power_series(schedule: PowerSchedule, n_ticks: int) -> np.ndarray:
    """``victim_power_at`` for ticks ``0..n_ticks-1`` in one array."""
    if not schedule.segments:
        return np.full(n_ticks, schedule.p_idle)
    body = np.repeat(
        np.array([s.watts for s in schedule.segments], dtype=float),
        np.array([s.duration for s in schedule.segments]),
    )
    if body.size >= n_ticks:
        return body[:n_ticks]
    return np.concatenate([body, np.full(n_ticks - body.size, schedule.p_idle)])
