"""Bandwidth and RTT estimation for a single flow."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import US_PER_S, RttSample, bits_of

RTO_MIN_S = 0.2
RTO_MAX_S = 60.0
RTO_INITIAL_S = 1.0


@dataclass
class _Ewma:
    """Exponentially weighted averages of sample length and spacing."""

    gain: float
    avg_len_bits: float = 0.0
    avg_interval_s: float = 0.0
    samples: int = 0

    def update(self, length_bits: float, interval_s: float | None) -> None:
        if self.samples == 0:
            self.avg_len_bits = float(length_bits)
            self.samples = 1
            return
        if interval_s is None or interval_s <= 0:
            return
        g = self.gain
        self.avg_len_bits = g * self.avg_len_bits + (1 - g) * length_bits
        if self.samples == 1:
            self.avg_interval_s = interval_s
        else:
            self.avg_interval_s = g * self.avg_interval_s + (1 - g) * interval_s
        self.samples += 1

    @property
    def rate_bps(self) -> float:
        if self.samples < 2 or self.avg_interval_s <= 0:
            return 0.0
        return self.avg_len_bits / self.avg_interval_s


@dataclass
class BwEstimator:
    """Send-side and ACK-side EWMA bandwidth estimates.

    The first sample seeds the length average; the interval average starts
    with the second sample, since an interval needs two events. Samples whose
    interval is zero (two events in one microsecond) are skipped but still
    move the reference timestamp. The ACK-side estimate is the one controllers
    consume (:meth:`current_bwe`); the send-side estimate is kept for traces.
    """

    gain: float = 0.9
    send: _Ewma = field(init=False)
    ack: _Ewma = field(init=False)
    last_send_time: int | None = None
    last_ack_time: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.gain < 1.0:
            raise ValueError(f"EWMA gain must be in [0, 1), got {self.gain}")
        self.send = _Ewma(self.gain)
        self.ack = _Ewma(self.gain)

    @property
    def sample_count(self) -> int:
        return self.ack.samples

    @property
    def avg_pkt_len(self) -> float:
        return self.ack.avg_len_bits

    @property
    def avg_interval(self) -> float:
        return self.ack.avg_interval_s

    def record_send(self, packet_size: int, now: int) -> None:
        if self.last_send_time is not None and now < self.last_send_time:
            raise ValueError("send timestamps must be nondecreasing")
        interval = None
        if self.last_send_time is not None:
            interval = (now - self.last_send_time) / US_PER_S
        self.send.update(bits_of(packet_size), interval)
        self.last_send_time = now

    def record_ack(self, acked: int, packet_size: int, now: int,
                   covered_bytes: int | None = None) -> None:
        """Feed one cumulative ACK covering ``acked`` new segments.

        ``covered_bytes`` overrides ``acked * packet_size`` when segment
        sizes are not uniform.
        """
        if acked < 1:
            raise ValueError(f"an ACK must cover at least one segment, got {acked}")
        if self.last_ack_time is not None and now < self.last_ack_time:
            raise ValueError("ACK timestamps must be nondecreasing")
        size = covered_bytes if covered_bytes is not None else acked * packet_size
        interval = None
        if self.last_ack_time is not None:
            interval = (now - self.last_ack_time) / US_PER_S
        self.ack.update(bits_of(size), interval)
        self.last_ack_time = now

    def current_bwe(self) -> float:
        """ACK-side bandwidth estimate in bits/s; 0 before two samples."""
        return self.ack.rate_bps

    def send_bwe(self) -> float:
        return self.send.rate_bps


@dataclass
class RttTracker:
    rto_min: float = RTO_MIN_S
    rto_max: float = RTO_MAX_S
    base_rtt: float | None = None
    last_rtt: float = 0.0
    srtt: float = 0.0
    rttvar: float = 0.0
    rto: float = RTO_INITIAL_S
    backoff: int = 0

    def update(self, sample: RttSample) -> None:
        rtt = sample.rtt
        if not rtt > 0:
            raise ValueError(f"RTT must be positive, got {rtt}")
        if self.base_rtt is None:
            self.base_rtt = rtt
            self.srtt = rtt
            self.rttvar = rtt / 2
        else:
            self.base_rtt = min(self.base_rtt, rtt)
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt
        self.last_rtt = rtt
        self.rto = min(max(self.srtt + 4 * self.rttvar, self.rto_min), self.rto_max)
        self.backoff = 0

    def back_off(self) -> None:
        """Double the timer after an expiry, capped at ``rto_max``."""
        self.backoff += 1
        self.rto = min(self.rto * 2, self.rto_max)

    @property
    def rtt_min(self) -> float | None:
        return self.base_rtt


def record_send(e: BwEstimator, packet_size: int, now: int) -> BwEstimator:
    e.record_send(packet_size, now)
    return e


def record_ack(e: BwEstimator, acked: int, packet_size: int, now: int) -> BwEstimator:
    e.record_ack(acked, packet_size, now)
    return e


def current_bwe(e: BwEstimator) -> float:
    return e.current_bwe()


def rtt_update(t: RttTracker, s: RttSample) -> RttTracker:
    t.update(s)
    return t
