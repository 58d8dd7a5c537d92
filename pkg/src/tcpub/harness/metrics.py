"""Run reports and the metrics computed from them."""

from __future__ import annotations

import bisect
import statistics
from dataclasses import dataclass, field
from typing import Sequence

from ..core import seconds_to_us
from ..netsim import Sample


@dataclass
class FlowReport:
    flow_id: int
    controller: str
    samples: list[Sample]
    ack_log: list[tuple[int, int]]
    deliver_times: list[int]
    data_tx: int
    retransmits: int
    acks_sent: int
    timeouts: int
    fast_retransmits: int
    window_violations: int
    unique_sent: int
    delivered_before_sent: int = 0

    def cwnd_trace(self) -> list[tuple[int, int]]:
        return [(s.time, s.cwnd) for s in self.samples]


@dataclass
class MetricsReport:
    scenario: str
    controller: str
    seed: int
    duration_s: float
    speed: float | None
    seg_size: int
    header_size: int
    ack_size: int
    bottleneck_bps: float
    flows: list[FlowReport]
    drops: int
    max_queue: int
    queue_capacity: int
    cbr_sent: int
    cbr_delivered: int
    acks_lost: int
    outages: list[list[tuple[int, int]]] = field(default_factory=list)
    stability_band: float = 0.2
    efficiency_bucket_s: float = 10.0

    @property
    def payload_bytes(self) -> int:
        return self.seg_size - self.header_size

    @property
    def measured(self) -> FlowReport:
        return self.flows[0]

    @property
    def duration_us(self) -> int:
        return seconds_to_us(self.duration_s)


def goodput(report: MetricsReport, t0: float, t1: float, flow: int = 0) -> float:
    """Unique in-order payload bits delivered in ``(t0, t1]`` per second."""
    if not t0 < t1:
        raise ValueError(f"empty interval [{t0}, {t1}]")
    times = report.flows[flow].deliver_times
    lo = bisect.bisect_right(times, seconds_to_us(t0))
    hi = bisect.bisect_right(times, seconds_to_us(t1))
    return (hi - lo) * report.payload_bytes * 8 / (t1 - t0)


def efficiency_series(report: MetricsReport, bucket: float,
                      flow: int = 0) -> list[tuple[float, float]]:
    """Acknowledged payload megabits within each ``bucket``-second window.

    Points are stamped with the bucket's end time; the running sum of the
    values gives cumulative acknowledged megabits.
    """
    if bucket <= 0:
        raise ValueError("bucket must be positive")
    step = seconds_to_us(bucket)
    horizon = report.duration_us
    n = max(1, -(-horizon // step))
    per_bucket = [0] * n
    prev = 0
    for t, cum in report.flows[flow].ack_log:
        idx = min(max(t - 1, 0) // step, n - 1)
        per_bucket[idx] += cum - prev
        prev = cum
    bits = report.payload_bytes * 8
    return [((i + 1) * bucket, per_bucket[i] * bits / 1e6) for i in range(n)]


def stability_index(cwnd_trace: Sequence[tuple[int, float]], t0: float, t1: float,
                    band: float = 0.2) -> float:
    """Fraction of cwnd samples in ``[t0, t1]`` within ``band`` of their median."""
    lo, hi = seconds_to_us(t0), seconds_to_us(t1)
    values = [c for t, c in cwnd_trace if lo <= t <= hi]
    if len(values) < 2:
        raise ValueError(f"need at least 2 samples in [{t0}, {t1}], got {len(values)}")
    m = statistics.median(values)
    inside = sum(1 for c in values if (1 - band) * m <= c <= (1 + band) * m)
    return inside / len(values)


def bandwidth_consumed(report: MetricsReport, flow: int = 0) -> int:
    """Bits the flow put on the network: every data transmission plus its ACKs."""
    f = report.flows[flow]
    return f.data_tx * report.seg_size * 8 + f.acks_sent * report.ack_size * 8


def delivered_payload_bits(report: MetricsReport, flow: int = 0) -> int:
    return len(report.flows[flow].deliver_times) * report.payload_bytes * 8


def summary_stability(report: MetricsReport, flow: int = 0) -> float:
    """Stability over the final two-thirds of the run."""
    return stability_index(report.flows[flow].cwnd_trace(), report.duration_s / 3,
                           report.duration_s, report.stability_band)


def summary_row(report: MetricsReport) -> dict[str, object]:
    f = report.measured
    return {
        "scenario": report.scenario,
        "controller": report.controller,
        "seed": report.seed,
        "goodput_bps": goodput(report, 0.0, report.duration_s),
        "efficiency_mbits_total": sum(v for _, v in efficiency_series(
            report, report.efficiency_bucket_s)),
        "stability_index": summary_stability(report) if len(f.samples) >= 2 else float("nan"),
        "drops": report.drops,
        "retransmits": f.retransmits,
        "consumed_bits": bandwidth_consumed(report),
    }
