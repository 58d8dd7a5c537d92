"""Deterministic discrete-event simulation of TCP flows over a relay chain.

Every link is a drop-tail FIFO whose departure times are computed when a
packet is accepted. Outage intervals are known up front (they come from the
mobility model), so a packet's fate on a hop is settled at enqueue time and
the only events are per-hop arrivals, ACK arrivals, timers and samplers.
Ties between events at the same microsecond are broken by scheduling order.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

from .controller import Controller, Recovery
from .core import RngStream, RttSample, seconds_to_us
from .estimator import BwEstimator, RttTracker

log = logging.getLogger(__name__)

QUEUE_CAPACITY = 80
ACK_SIZE = 40
HEADER_SIZE = 40


class SchedulingError(RuntimeError):
    pass


class EventKind(enum.IntEnum):
    ARRIVAL = 0
    ACK = 1
    TIMER = 2
    CBR = 3
    SAMPLE = 4


class Event(NamedTuple):
    fire_at: int
    seq: int
    kind: EventKind
    payload: Any


class PacketKind(enum.Enum):
    DATA = "data"
    ACK = "ack"
    CBR = "cbr"


@dataclass(slots=True)
class Packet:
    flow_id: int
    seq_no: int
    size: int
    kind: PacketKind
    sent_at: int
    retransmission: bool = False
    tx_id: int = 0
    # ACK fields: cumulative ack plus an echo of the segment that caused it
    cum_ack: int = 0
    echo_seq: int = -1
    echo_sent_at: int = 0
    echo_retx: bool = False
    echo_tx_id: int = 0


class Simulator:
    """Binary-heap event loop keyed on ``(fire_at, seq)``."""

    def __init__(self, record: bool = False) -> None:
        self.now = 0
        self._heap: list[Event] = []
        self._seq = 0
        self._handlers: dict[EventKind, Callable[[Any], None]] = {}
        self.dispatch_log: list[tuple[int, int, int]] | None = [] if record else None
        self.dispatched = 0

    def on(self, kind: EventKind, handler: Callable[[Any], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, fire_at: int, kind: EventKind, payload: Any = None) -> Event:
        if fire_at < self.now:
            raise SchedulingError(f"event at {fire_at} scheduled in the past (now={self.now})")
        ev = Event(fire_at, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def run_until(self, t_end: int) -> None:
        heap = self._heap
        handlers = self._handlers
        record = self.dispatch_log
        pop = heapq.heappop
        count = 0
        while heap and heap[0][0] <= t_end:
            ev = pop(heap)
            self.now = ev[0]
            if record is not None:
                record.append((ev[0], ev[1], int(ev[2])))
            handlers[ev[2]](ev[3])
            count += 1
        self.dispatched += count

    @property
    def pending(self) -> int:
        return len(self._heap)


def schedule(sim: Simulator, event_at: int, kind: EventKind, payload: Any = None) -> Event:
    return sim.schedule(event_at, kind, payload)


def run_until(sim: Simulator, t_end: int) -> None:
    sim.run_until(t_end)


class Link:
    """Point-to-point hop with serialization, propagation and a drop-tail queue.

    ``outages`` are half-open ``[start, end)`` intervals during which the hop
    is down: arrivals are refused, a packet being serialized when the link
    drops is lost, and queued packets wait for the link to come back.
    """

    def __init__(self, bandwidth_bps: float, prop_delay_s: float, *,
                 capacity: int = QUEUE_CAPACITY, loss_rate: float = 0.0,
                 loss_rng: RngStream | None = None,
                 outages: Sequence[tuple[int, int]] = ()) -> None:
        if bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive")
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        if not 0.0 <= loss_rate < 1.0:
            raise ValueError("loss rate must be in [0, 1)")
        self.bandwidth_bps = bandwidth_bps
        self.prop_us = seconds_to_us(prop_delay_s)
        self.capacity = capacity
        self.loss_rate = loss_rate
        self.loss_rng = loss_rng
        self.set_outages(outages)
        self._finish: deque[int] = deque()
        self.busy_until = 0
        self._tx_cache: dict[int, int] = {}
        self.max_queue = 0
        self.accepted = 0
        self.drops_full = 0
        self.drops_down = 0
        self.lost_in_transit = 0
        self.lost_random = 0

    def set_outages(self, outages: Sequence[tuple[int, int]]) -> None:
        self.outages = sorted(outages)
        self._starts = [s for s, _ in self.outages]

    def tx_time(self, size: int) -> int:
        t = self._tx_cache.get(size)
        if t is None:
            t = seconds_to_us(size * 8 / self.bandwidth_bps)
            self._tx_cache[size] = t
        return t

    def down_at(self, t: int) -> bool:
        i = bisect.bisect_right(self._starts, t) - 1
        return i >= 0 and t < self.outages[i][1]

    @property
    def up(self) -> bool:
        return not self.down_at(self.busy_until)

    def queue_length(self, now: int) -> int:
        finish = self._finish
        while finish and finish[0] <= now:
            finish.popleft()
        return len(finish)

    def offer(self, size: int, now: int) -> tuple[bool, int | None]:
        """Try to enqueue a packet of ``size`` bytes arriving at ``now``.

        Returns ``(accepted, arrival_time_at_far_end)``; the arrival time is
        None when the packet is accepted but lost on the hop.
        """
        if self.outages and self.down_at(now):
            self.drops_down += 1
            return False, None
        qlen = self.queue_length(now)
        if qlen >= self.capacity:
            self.drops_full += 1
            return False, None
        self.accepted += 1
        if qlen + 1 > self.max_queue:
            self.max_queue = qlen + 1
        start = self.busy_until if self.busy_until > now else now
        finish = start + self.tx_time(size)
        if self.outages:
            outages = self.outages
            j = bisect.bisect_right(self._starts, start)
            if j > 0 and start < outages[j - 1][1]:
                start = outages[j - 1][1]
            while j < len(outages) and outages[j][0] <= start:
                start = max(start, outages[j][1])
                j += 1
            finish = start + self.tx_time(size)
            if j < len(outages) and outages[j][0] < finish:
                cut = outages[j][0]
                self.busy_until = cut
                self._finish.append(cut)
                self.lost_in_transit += 1
                return True, None
        self.busy_until = finish
        self._finish.append(finish)
        if self.loss_rate and self.loss_rng is not None and self.loss_rng.random() < self.loss_rate:
            self.lost_random += 1
            return True, None
        return True, finish + self.prop_us

    @property
    def drops(self) -> int:
        return self.drops_full + self.drops_down + self.lost_in_transit + self.lost_random


def enqueue(link: Link, packet: Packet, now: int) -> bool:
    return link.offer(packet.size, now)[0]


@dataclass
class FlowStats:
    data_tx: int = 0
    retransmits: int = 0
    data_bits: int = 0
    acks_received: int = 0
    fast_retransmits: int = 0
    timeouts: int = 0
    window_violations: int = 0
    cum_ack_regressions: int = 0


class Flow:
    """Bulk-transfer TCP sender driven by a pluggable controller."""

    def __init__(self, flow_id: int, controller: Controller, net: "Network", *,
                 seg_size: int = 1040, ewma_gain: float = 0.9,
                 rto_min: float = 0.2, rto_max: float = 60.0) -> None:
        self.flow_id = flow_id
        self.controller = controller
        self.net = net
        self.seg_size = seg_size
        self.est = BwEstimator(ewma_gain)
        self.tracker = RttTracker(rto_min=rto_min, rto_max=rto_max)
        self.next_seq = 0
        self.highest_cum_ack = 0
        self.sent_at: dict[int, int] = {}
        self.first_sent_at: dict[int, int] = {}
        self._last_tx: dict[int, int] = {}
        self._retx: set[int] = set()
        self._pending: list[int] = []
        self._pending_set: set[int] = set()
        self._delivered: set[int] = set()
        self._tx_order: deque[tuple[int, int]] = deque()
        self._tx_counter = 0
        self._recover = -1
        self._recovery_start = 0
        # highest seq outstanding when the last recovery began; duplicate
        # ACKs below it cannot start a new episode
        self._recover_high = -1
        self._rto_deadline: int | None = None
        self._rto_event_at: int | None = None
        self.selective = controller.recovery is Recovery.SELECTIVE
        self.stats = FlowStats()
        self.ack_log: list[tuple[int, int]] = []

    # window accounting -------------------------------------------------

    @property
    def outstanding(self) -> int:
        return self.next_seq - self.highest_cum_ack

    @property
    def in_flight(self) -> int:
        return self.outstanding - len(self._pending_set) - len(self._delivered)

    def _add_pending(self, seq: int) -> None:
        if seq not in self._pending_set:
            self._pending_set.add(seq)
            heapq.heappush(self._pending, seq)

    def _pop_pending(self) -> int | None:
        while self._pending:
            seq = heapq.heappop(self._pending)
            if seq in self._pending_set:
                self._pending_set.discard(seq)
                return seq
        return None

    def _discard_pending(self, seq: int) -> None:
        self._pending_set.discard(seq)

    # sending -------------------------------------------------------------

    def send(self, now: int) -> int:
        """Fill the window; returns the number of segments emitted."""
        cwnd = self.controller.state.cwnd
        emitted = 0
        while self.in_flight < cwnd:
            seq = self._pop_pending() if self._pending_set else None
            if seq is None:
                seq = self.next_seq
                self.next_seq += 1
            self._transmit(seq, now)
            emitted += 1
        return emitted

    def _transmit(self, seq: int, now: int) -> None:
        retx = seq in self.first_sent_at
        self._tx_counter += 1
        tx_id = self._tx_counter
        pkt = Packet(self.flow_id, seq, self.seg_size, PacketKind.DATA, now, retx, tx_id)
        if retx:
            self._retx.add(seq)
            self.stats.retransmits += 1
        else:
            self.first_sent_at[seq] = now
        self.sent_at[seq] = now
        self._last_tx[seq] = tx_id
        if self.selective:
            self._tx_order.append((tx_id, seq))
        self.stats.data_tx += 1
        self.stats.data_bits += self.seg_size * 8
        self.est.record_send(self.seg_size, now)
        self.net.inject(pkt, now)
        if self._rto_deadline is None:
            self._arm_rto(now)

    # ACK processing ------------------------------------------------------

    def on_ack(self, ack: Packet, now: int) -> None:
        self.stats.acks_received += 1
        cum = ack.cum_ack
        if cum < self.highest_cum_ack:
            # reordered or stale cumulative ACK; ignored
            return
        if self.selective:
            self._note_delivery(ack)
        if cum > self.highest_cum_ack:
            self._on_new_ack(ack, now)
        elif self.outstanding > 0:
            self._on_dup_ack(now)
        self.send(now)

    def _note_delivery(self, ack: Packet) -> None:
        if ack.echo_seq >= ack.cum_ack and self._last_tx.get(ack.echo_seq) is not None:
            self._delivered.add(ack.echo_seq)
            self._pending_set.discard(ack.echo_seq)
        # FIFO path: anything transmitted before the echoed copy and not yet
        # seen at the receiver was lost
        order = self._tx_order
        while order and order[0][0] < ack.echo_tx_id:
            tx_id, seq = order.popleft()
            if (seq >= ack.cum_ack and seq >= self.highest_cum_ack
                    and self._last_tx.get(seq) == tx_id
                    and seq not in self._delivered):
                self._add_pending(seq)

    def _on_new_ack(self, ack: Packet, now: int) -> None:
        old = self.highest_cum_ack
        cum = ack.cum_ack
        acked = cum - old
        for seq in range(old, cum):
            self.sent_at.pop(seq, None)
            self._last_tx.pop(seq, None)
            self._retx.discard(seq)
            self._pending_set.discard(seq)
            self._delivered.discard(seq)
        self.highest_cum_ack = cum
        self.ack_log.append((now, cum))
        rtt = None
        if not ack.echo_retx and ack.echo_seq >= 0:
            rtt_us = now - ack.echo_sent_at
            if rtt_us > 0:
                rtt = rtt_us / 1e6
                self.tracker.update(RttSample(rtt, now))
        self.est.record_ack(acked, self.seg_size, now)
        self.controller.on_ack(now, acked, rtt, self.tracker, self.est)
        if self._recover >= 0:
            if cum >= self._recover:
                self._recover = -1
            elif self.controller.recovery is Recovery.HOLE:
                # partial ACK: the next hole is lost too
                if self.sent_at.get(cum, -1) < self._recovery_start:
                    self._retransmit_now(cum, now)
        if self.outstanding > 0:
            self._arm_rto(now, restart=True)
        else:
            self._rto_deadline = None

    def _on_dup_ack(self, now: int) -> None:
        if self.highest_cum_ack <= self._recover_high:
            return
        if not self.controller.on_dup_ack(self.tracker, self.est):
            return
        self.stats.fast_retransmits += 1
        hole = self.highest_cum_ack
        self._recover = self.next_seq
        self._recover_high = self.next_seq - 1
        self._recovery_start = now
        recovery = self.controller.recovery
        if recovery is Recovery.GO_BACK_N:
            self._retransmit_now(hole, now)
            for seq in range(hole + 1, self.next_seq):
                self._add_pending(seq)
        elif recovery is Recovery.SELECTIVE:
            # each duplicate ACK also frees a window slot, so the hole goes
            # out through the normal send path
            if hole not in self._retx:
                self._add_pending(hole)
        else:
            self._retransmit_now(hole, now)

    def _retransmit_now(self, seq: int, now: int) -> None:
        """Send ``seq`` regardless of the window (it replaces a lost copy)."""
        self._discard_pending(seq)
        self._transmit(seq, now)

    # retransmission timer -----------------------------------------------

    def _arm_rto(self, now: int, restart: bool = False) -> None:
        if self._rto_deadline is not None and not restart:
            return
        deadline = now + seconds_to_us(self.tracker.rto)
        self._rto_deadline = deadline
        if self._rto_event_at is None or deadline < self._rto_event_at:
            self._rto_event_at = deadline
            self.net.sim.schedule(deadline, EventKind.TIMER, self)

    def on_timer(self, now: int) -> None:
        if self._rto_event_at != now:
            return
        self._rto_event_at = None
        deadline = self._rto_deadline
        if deadline is None:
            return
        if now < deadline:
            self._rto_event_at = deadline
            self.net.sim.schedule(deadline, EventKind.TIMER, self)
            return
        self._rto_deadline = None
        self.on_rto(now)

    def on_rto(self, now: int) -> None:
        if self.outstanding <= 0:
            return
        self.stats.timeouts += 1
        self.controller.on_timeout(self.tracker, self.est)
        self.tracker.back_off()
        self._recover = -1
        self._recover_high = self.next_seq - 1
        skip_delivered = self.selective
        if not skip_delivered:
            self._delivered.clear()
        for seq in range(self.highest_cum_ack, self.next_seq):
            if skip_delivered and seq in self._delivered:
                continue
            self._add_pending(seq)
        self.send(now)
        self._arm_rto(now, restart=True)

    def check_window(self, before: int) -> None:
        if self.in_flight > max(before, self.controller.state.cwnd):
            self.stats.window_violations += 1


class Receiver:
    """Cumulative-ACK sink that buffers out-of-order segments."""

    def __init__(self, flow_id: int, seg_size: int, header: int = HEADER_SIZE) -> None:
        self.flow_id = flow_id
        self.expected = 0
        self.payload = seg_size - header
        self._buffer: set[int] = set()
        self.deliver_times: list[int] = []
        self.arrivals = 0
        self.duplicate_arrivals = 0
        self.acks_sent = 0

    def on_data(self, pkt: Packet, now: int) -> Packet:
        self.arrivals += 1
        seq = pkt.seq_no
        if seq < self.expected or seq in self._buffer:
            self.duplicate_arrivals += 1
        elif seq == self.expected:
            self.expected += 1
            self.deliver_times.append(now)
            buf = self._buffer
            while self.expected in buf:
                buf.discard(self.expected)
                self.expected += 1
                self.deliver_times.append(now)
        else:
            self._buffer.add(seq)
        self.acks_sent += 1
        return Packet(self.flow_id, seq, ACK_SIZE, PacketKind.ACK, now,
                      cum_ack=self.expected, echo_seq=seq, echo_sent_at=pkt.sent_at,
                      echo_retx=pkt.retransmission, echo_tx_id=pkt.tx_id)


def cbr_times(rate_pps: float | None, horizon: int, start: int = 0) -> list[int]:
    """Emission instants of a constant-rate source over ``[start, horizon)``."""
    if not rate_pps:
        return []
    if rate_pps <= 0:
        raise ValueError("CBR rate must be positive")
    out = []
    k = 0
    while True:
        t = start + seconds_to_us(k / rate_pps)
        if t >= horizon:
            return out
        out.append(t)
        k += 1


@dataclass
class Sample:
    time: int
    cwnd: int
    ssthresh: int
    bwe: float
    diff: float
    action: str
    acked_segments: int
    delivered_segments: int
    sent_segments: int


@dataclass
class NetworkConfig:
    hops: int = 3
    bandwidth_bps: float = 2_000_000.0
    prop_delay_s: float = 0.010
    queue_packets: int = QUEUE_CAPACITY
    loss_rate: float = 0.0
    ack_loss: bool = False
    seg_size: int = 1040
    header_size: int = HEADER_SIZE
    ack_size: int = ACK_SIZE
    cbr_rate_pps: float | None = 8.0
    cbr_sources: int = 1
    sample_interval_s: float = 0.1
    rto_min_s: float = 0.2
    rto_max_s: float = 60.0
    ewma_gain: float = 0.9


class Network:
    """Relay chain ``0 -> 1 -> ... -> hops`` carrying TCP flows and CBR."""

    def __init__(self, cfg: NetworkConfig, seed: int, *,
                 hop_outages: Sequence[Sequence[tuple[int, int]]] | None = None,
                 record_events: bool = False) -> None:
        self.cfg = cfg
        self.seed = seed
        self.sim = Simulator(record=record_events)
        self.links: list[Link] = []
        for k in range(cfg.hops):
            outages = hop_outages[k] if hop_outages else ()
            self.links.append(Link(
                cfg.bandwidth_bps, cfg.prop_delay_s, capacity=cfg.queue_packets,
                loss_rate=cfg.loss_rate,
                loss_rng=RngStream.derive(seed, "loss", k) if cfg.loss_rate else None,
                outages=outages,
            ))
        self._ack_rngs = [RngStream.derive(seed, "ack-loss", k) for k in range(cfg.hops)]
        self.flows: list[Flow] = []
        self.receivers: list[Receiver] = []
        self.samples: list[list[Sample]] = []
        self.cbr_sent = 0
        self.cbr_delivered = 0
        self.acks_lost = 0
        self.sim.on(EventKind.ARRIVAL, self._on_arrival)
        self.sim.on(EventKind.ACK, self._on_ack)
        self.sim.on(EventKind.TIMER, self._on_timer)
        self.sim.on(EventKind.CBR, self._on_cbr)
        self.sim.on(EventKind.SAMPLE, self._on_sample)

    def add_flow(self, controller: Controller) -> Flow:
        flow_id = len(self.flows)
        cfg = self.cfg
        flow = Flow(flow_id, controller, self, seg_size=cfg.seg_size,
                    ewma_gain=cfg.ewma_gain, rto_min=cfg.rto_min_s, rto_max=cfg.rto_max_s)
        self.flows.append(flow)
        self.receivers.append(Receiver(flow_id, cfg.seg_size, cfg.header_size))
        self.samples.append([])
        return flow

    # packet movement -----------------------------------------------------

    def inject(self, pkt: Packet, now: int) -> bool:
        return self._forward(pkt, 0, now)

    def _forward(self, pkt: Packet, hop: int, now: int) -> bool:
        accepted, arrive = self.links[hop].offer(pkt.size, now)
        if arrive is not None:
            self.sim.schedule(arrive, EventKind.ARRIVAL, (pkt, hop + 1))
        return accepted

    def _on_arrival(self, payload: tuple[Packet, int]) -> None:
        pkt, node = payload
        now = self.sim.now
        if node < self.cfg.hops:
            self._forward(pkt, node, now)
            return
        if pkt.kind is PacketKind.CBR:
            self.cbr_delivered += 1
            return
        ack = self.receivers[pkt.flow_id].on_data(pkt, now)
        at = self._ack_path(now)
        if at is not None:
            self.sim.schedule(at, EventKind.ACK, ack)

    def _ack_path(self, now: int) -> int | None:
        t = now
        for k in range(self.cfg.hops - 1, -1, -1):
            link = self.links[k]
            if link.outages and link.down_at(t):
                self.acks_lost += 1
                return None
            if self.cfg.ack_loss and link.loss_rate and self._ack_rngs[k].random() < link.loss_rate:
                self.acks_lost += 1
                return None
            t += link.tx_time(self.cfg.ack_size) + link.prop_us
        return t

    def _on_ack(self, ack: Packet) -> None:
        flow = self.flows[ack.flow_id]
        before = flow.in_flight
        flow.on_ack(ack, self.sim.now)
        flow.check_window(before)

    def _on_timer(self, flow: Flow) -> None:
        before = flow.in_flight
        flow.on_timer(self.sim.now)
        flow.check_window(before)

    def _on_cbr(self, source: int) -> None:
        self.cbr_sent += 1
        pkt = Packet(-1 - source, self.cbr_sent, self.cfg.seg_size, PacketKind.CBR, self.sim.now)
        self.inject(pkt, self.sim.now)

    def _on_sample(self, _: Any) -> None:
        now = self.sim.now
        for flow, rx, series in zip(self.flows, self.receivers, self.samples):
            ctl = flow.controller
            series.append(Sample(
                now, ctl.state.cwnd, ctl.state.ssthresh, flow.est.current_bwe(),
                ctl.last_diff, ctl.last_action.value if ctl.last_action else "",
                flow.highest_cum_ack, rx.expected, flow.next_seq,
            ))

    # driving -------------------------------------------------------------

    def run(self, duration_s: float) -> None:
        horizon = seconds_to_us(duration_s)
        sim = self.sim
        for flow in self.flows:
            before = flow.in_flight
            flow.send(0)
            flow.check_window(before)
        for source in range(self.cfg.cbr_sources):
            for t in cbr_times(self.cfg.cbr_rate_pps, horizon):
                sim.schedule(t, EventKind.CBR, source)
        step = seconds_to_us(self.cfg.sample_interval_s)
        n = round(horizon / step) if step else 0
        for k in range(1, n + 1):
            sim.schedule(k * step, EventKind.SAMPLE)
        sim.run_until(horizon)
        log.debug("simulated %.1f s in %d events", duration_s, sim.dispatched)

    @property
    def max_queue(self) -> int:
        return max((link.max_queue for link in self.links), default=0)
