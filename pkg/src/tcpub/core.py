"""Shared units, simulation time and the deterministic splitmix64 generator.

Quantities are plain numbers whose unit is fixed by name: ``*_us`` is integer
microseconds, ``*_s`` seconds, ``*_bits``/``*_bytes`` sizes, ``*_bps`` rates.
Every crossing between units goes through one of the helpers below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NewType

MASK64 = (1 << 64) - 1
US_PER_S = 1_000_000

SimTime = NewType("SimTime", int)
"""Microseconds since simulation start."""


def seconds_to_us(seconds: float) -> SimTime:
    if seconds < 0:
        raise ValueError(f"negative duration: {seconds}")
    return SimTime(round(seconds * US_PER_S))


def us_to_seconds(micros: int) -> float:
    return micros / US_PER_S


def elapsed(later: int, earlier: int) -> SimTime:
    """Difference of two timestamps; raises if they are out of order."""
    if later < earlier:
        raise ValueError(f"time went backwards: {later} < {earlier}")
    return SimTime(later - earlier)


def bits_of(packet_size: int) -> int:
    """Bytes to bits."""
    if packet_size < 0:
        raise ValueError(f"negative packet size: {packet_size}")
    return packet_size * 8


def segments_to_bits(segments: float, seg_size: int) -> float:
    return segments * seg_size * 8


def bdp_segments(rate_bps: float, rtt_s: float, seg_size: int) -> float:
    """Bandwidth-delay product expressed in whole-segment units (unfloored)."""
    return rate_bps * rtt_s / (seg_size * 8)


@dataclass(frozen=True, slots=True)
class RttSample:
    rtt: float
    at: int

    def __post_init__(self) -> None:
        if not self.rtt > 0:
            raise ValueError(f"RTT sample must be positive, got {self.rtt}")


@dataclass(frozen=True, slots=True)
class Rng:
    """Immutable splitmix64 state.

    ``next()`` returns the successor generator together with the output so
    callers can thread state explicitly; :class:`RngStream` wraps this for the
    mutable single-owner case used inside the simulator.
    """

    state: int

    def next(self) -> tuple["Rng", int]:
        state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return Rng(state), z ^ (z >> 31)

    def uniform(self, lo: float, hi: float) -> tuple["Rng", float]:
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi})")
        nxt, value = self.next()
        x = lo + (value / 2.0**64) * (hi - lo)
        # float rounding can land exactly on hi for large values
        if x >= hi and hi > lo:
            x = math.nextafter(hi, lo)
        return nxt, x


def rng_next(r: Rng) -> tuple[Rng, int]:
    return r.next()


def rng_uniform(r: Rng, lo: float, hi: float) -> tuple[Rng, float]:
    return r.uniform(lo, hi)


class RngStream:
    """Mutable owner of an :class:`Rng`; one per node or loss process."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    @classmethod
    def derive(cls, seed: int, *names: str | int) -> "RngStream":
        """Independent stream keyed by a seed and a consumer name path."""
        state = seed & MASK64
        for name in names:
            for byte in str(name).encode():
                state = Rng(state ^ byte).next()[1]
            state = Rng(state).next()[1]
        return cls(state)

    def next_u64(self) -> int:
        rng, value = Rng(self._state).next()
        self._state = rng.state
        return value

    def uniform(self, lo: float, hi: float) -> float:
        rng, value = Rng(self._state).uniform(lo, hi)
        self._state = rng.state
        return value

    def random(self) -> float:
        return self.uniform(0.0, 1.0)
