"""Congestion controllers: TCP-UB plus reference Vegas and Westwood.

TCP-UB runs a Vegas-style backlog estimate through three thresholds
(alpha < gamma < beta) and uses a Westwood-style bandwidth estimate whenever
it has to pick a new slow-start threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .estimator import BwEstimator, RttTracker

CONTROLLER_NAMES = ("ub", "vegas", "westwood")


class Phase(enum.Enum):
    SLOW_START = "slow_start"
    CONGESTION_AVOIDANCE = "congestion_avoidance"


class Action(enum.Enum):
    INCREASE = "increase"
    RECALIBRATE = "recalibrate"
    RESET = "reset"
    DECREASE = "decrease"
    HOLD = "hold"


class Recovery(enum.Enum):
    """Which segments the transport resends after a loss signal."""

    SELECTIVE = "selective"  # only segments known not to have arrived
    HOLE = "hole"  # the first unacknowledged segment, one hole per ACK
    GO_BACK_N = "go_back_n"  # everything unacknowledged, delivered or not


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 1.0
    gamma: float = 2.0
    beta: float = 3.0
    seg_size: int = 1040
    initial_cwnd: int = 2
    initial_ssthresh: int = 32
    ewma_gain: float = 0.9

    def __post_init__(self) -> None:
        if not 0 <= self.alpha <= self.gamma <= self.beta:
            raise ValueError(
                f"thresholds must satisfy 0 <= alpha <= gamma <= beta, got "
                f"{self.alpha}, {self.gamma}, {self.beta}"
            )
        if self.seg_size <= 0:
            raise ValueError("seg_size must be positive")
        if self.initial_cwnd < 1:
            raise ValueError("initial_cwnd must be >= 1")
        if self.initial_ssthresh < 2:
            raise ValueError("initial_ssthresh must be >= 2")
        if not 0 <= self.ewma_gain < 1:
            raise ValueError("ewma_gain must be in [0, 1)")


@dataclass(frozen=True)
class CcState:
    cwnd: int
    ssthresh: int
    dup_ack_count: int = 0

    def __post_init__(self) -> None:
        if self.cwnd < 1 or self.ssthresh < 2:
            raise ValueError(f"window floors violated: {self}")

    @property
    def phase(self) -> Phase:
        if self.cwnd < self.ssthresh:
            return Phase.SLOW_START
        return Phase.CONGESTION_AVOIDANCE

    @classmethod
    def initial(cls, cfg: ControllerConfig) -> "CcState":
        return cls(cfg.initial_cwnd, cfg.initial_ssthresh)


@dataclass(frozen=True)
class TraceRecord:
    time: int
    diff: float
    action: Action
    cwnd: int
    ssthresh: int
    bwe: float


def vegas_diff(cwnd: float, base_rtt: float, rtt: float) -> float:
    """Backlog estimate in segments: (expected - actual rate) * base RTT."""
    if base_rtt <= 0:
        raise ValueError(f"base_rtt must be positive, got {base_rtt}")
    rtt = max(rtt, base_rtt)
    expected = cwnd / base_rtt
    actual = cwnd / rtt
    return (expected - actual) * base_rtt


def bwe_ssthresh(bwe: float, rtt: float | None, seg_size: int) -> int:
    """Bandwidth-delay product in whole segments, floored at 2."""
    if not rtt or bwe <= 0:
        return 2
    return max(2, math.floor(bwe * rtt / (seg_size * 8)))


def decide(diff: float, cfg: ControllerConfig, timeout_expired: bool) -> Action:
    if diff < 0:
        raise ValueError(f"diff must be nonnegative, got {diff}")
    if diff < cfg.alpha:
        return Action.INCREASE
    if cfg.gamma <= diff <= cfg.beta:
        return Action.RECALIBRATE
    if timeout_expired:
        return Action.RESET
    if diff > cfg.beta:
        return Action.DECREASE
    return Action.HOLD


def apply(state: CcState, action: Action, bwe: float, base_rtt: float,
          cfg: ControllerConfig) -> CcState:
    if bwe < 0:
        raise ValueError("bwe must be nonnegative")
    if action is Action.INCREASE:
        return replace(state, cwnd=state.cwnd + 1)
    if action is Action.DECREASE:
        return replace(state, cwnd=max(1, state.cwnd - 1))
    if action is Action.HOLD:
        return state
    ssthresh = bwe_ssthresh(bwe, base_rtt, cfg.seg_size)
    if action is Action.RESET:
        return replace(state, cwnd=1, ssthresh=ssthresh)
    # RECALIBRATE
    return replace(state, cwnd=min(state.cwnd, ssthresh), ssthresh=ssthresh)


def ub_on_dup_ack(state: CcState, est: BwEstimator, rtt_min: float | None,
                  cfg: ControllerConfig) -> tuple[CcState, bool]:
    count = state.dup_ack_count + 1
    if count != 3:
        return replace(state, dup_ack_count=count), False
    ssthresh = bwe_ssthresh(est.current_bwe(), rtt_min, cfg.seg_size)
    return CcState(min(state.cwnd, ssthresh), ssthresh, count), True


def ub_on_timeout(state: CcState, est: BwEstimator, base_rtt: float | None,
                  cfg: ControllerConfig) -> CcState:
    ssthresh = bwe_ssthresh(est.current_bwe(), base_rtt, cfg.seg_size)
    return CcState(1, ssthresh, 0)


def vegas_reference(state: CcState, diff: float, cfg: ControllerConfig) -> CcState:
    """One per-RTT Vegas adjustment in congestion avoidance.

    A decrease pulls ssthresh down with the window so the flow stays in
    congestion avoidance instead of slow-starting straight back up.
    """
    if diff < cfg.alpha:
        return replace(state, cwnd=state.cwnd + 1)
    if diff > cfg.beta:
        cwnd = max(1, state.cwnd - 1)
        return replace(state, cwnd=cwnd, ssthresh=max(2, min(state.ssthresh, cwnd)))
    return state


def _halved(state: CcState) -> int:
    return max(2, state.cwnd // 2)


class Controller:
    """Event-driven contract shared by all controllers.

    The transport reports every new cumulative ACK, every duplicate ACK and
    every timer expiry; the controller owns the window and tells the
    transport which recovery discipline to use.
    """

    name = "base"
    recovery = Recovery.HOLE

    def __init__(self, cfg: ControllerConfig | None = None) -> None:
        self.cfg = cfg or ControllerConfig()
        self.state = CcState.initial(self.cfg)
        self.last_diff = math.nan
        self.last_action: Action | None = None

    @property
    def cwnd(self) -> int:
        return self.state.cwnd

    @property
    def ssthresh(self) -> int:
        return self.state.ssthresh

    def on_ack(self, now: int, acked: int, rtt: float | None,
               tracker: RttTracker, est: BwEstimator) -> TraceRecord | None:
        raise NotImplementedError

    def on_dup_ack(self, tracker: RttTracker, est: BwEstimator) -> bool:
        raise NotImplementedError

    def on_timeout(self, tracker: RttTracker, est: BwEstimator) -> None:
        raise NotImplementedError


class _PerRttController(Controller):
    """Runs a decision at most once per base RTT in congestion avoidance.

    The RTT fed to the decision is the smallest sample seen since the last
    decision, which filters out single delayed ACKs.
    """

    def __init__(self, cfg: ControllerConfig | None = None) -> None:
        super().__init__(cfg)
        self._next_eval: int | None = None
        self._window_min_rtt: float | None = None

    def on_ack(self, now, acked, rtt, tracker, est):
        state = self.state
        if state.dup_ack_count:
            state = replace(state, dup_ack_count=0)
        if rtt is not None and (self._window_min_rtt is None or rtt < self._window_min_rtt):
            self._window_min_rtt = rtt
        if state.cwnd < state.ssthresh:
            self.state = replace(state, cwnd=state.cwnd + 1)
            self._window_min_rtt = None
            return None
        self.state = state
        base = tracker.base_rtt
        if base is None:
            return None
        if self._window_min_rtt is None:
            return None
        if self._next_eval is not None and now < self._next_eval:
            return None
        diff = vegas_diff(state.cwnd, base, self._window_min_rtt)
        self._next_eval = now + round(base * 1e6)
        self._window_min_rtt = None
        action = self._decide(diff, est, base)
        self.last_diff = diff
        self.last_action = action
        return TraceRecord(now, diff, action, self.state.cwnd, self.state.ssthresh,
                           est.current_bwe())

    def _decide(self, diff: float, est: BwEstimator, base_rtt: float) -> Action:
        raise NotImplementedError

    def _restart_cadence(self) -> None:
        self._next_eval = None
        self._window_min_rtt = None


class UbController(_PerRttController):
    name = "ub"
    recovery = Recovery.SELECTIVE

    def _decide(self, diff, est, base_rtt):
        action = decide(diff, self.cfg, timeout_expired=False)
        self.state = apply(self.state, action, est.current_bwe(), base_rtt, self.cfg)
        return action

    def on_dup_ack(self, tracker, est):
        self.state, retransmit = ub_on_dup_ack(self.state, est, tracker.rtt_min, self.cfg)
        if retransmit:
            self._restart_cadence()
        return retransmit

    def on_timeout(self, tracker, est):
        self.state = ub_on_timeout(self.state, est, tracker.base_rtt, self.cfg)
        self.last_action = Action.RESET
        self._restart_cadence()


class VegasController(_PerRttController):
    name = "vegas"
    recovery = Recovery.HOLE

    def _decide(self, diff, est, base_rtt):
        before = self.state.cwnd
        self.state = vegas_reference(self.state, diff, self.cfg)
        if self.state.cwnd > before:
            return Action.INCREASE
        if self.state.cwnd < before:
            return Action.DECREASE
        return Action.HOLD

    def on_dup_ack(self, tracker, est):
        count = self.state.dup_ack_count + 1
        if count != 3:
            self.state = replace(self.state, dup_ack_count=count)
            return False
        ssthresh = _halved(self.state)
        self.state = CcState(ssthresh, ssthresh, count)
        self._restart_cadence()
        return True

    def on_timeout(self, tracker, est):
        self.state = CcState(1, _halved(self.state), 0)
        self.last_action = Action.RESET
        self._restart_cadence()


class WestwoodController(Controller):
    """Reno-style growth; bandwidth-estimate-driven reaction to loss."""

    name = "westwood"
    recovery = Recovery.GO_BACK_N

    def __init__(self, cfg: ControllerConfig | None = None) -> None:
        super().__init__(cfg)
        self._acked_in_ca = 0

    def on_ack(self, now, acked, rtt, tracker, est):
        state = self.state
        if state.cwnd < state.ssthresh:
            self.state = CcState(state.cwnd + 1, state.ssthresh, 0)
            return None
        self._acked_in_ca += acked
        cwnd = state.cwnd
        if self._acked_in_ca >= cwnd:
            self._acked_in_ca -= cwnd
            cwnd += 1
        if cwnd != state.cwnd or state.dup_ack_count:
            self.state = CcState(cwnd, state.ssthresh, 0)
        return None

    def on_dup_ack(self, tracker, est):
        self.state, retransmit = ub_on_dup_ack(self.state, est, tracker.rtt_min, self.cfg)
        if retransmit:
            self._acked_in_ca = 0
        return retransmit

    def on_timeout(self, tracker, est):
        self.state = ub_on_timeout(self.state, est, tracker.rtt_min, self.cfg)
        self.last_action = Action.RESET
        self._acked_in_ca = 0


_CONTROLLERS = {
    "ub": UbController,
    "vegas": VegasController,
    "westwood": WestwoodController,
}


def make_controller(name: str, cfg: ControllerConfig | None = None) -> Controller:
    try:
        cls = _CONTROLLERS[name]
    except KeyError:
        raise ValueError(
            f"unknown controller {name!r}; expected one of {', '.join(CONTROLLER_NAMES)}"
        ) from None
    return cls(cfg)
