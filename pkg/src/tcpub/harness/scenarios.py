"""Scenario presets and the function that turns one into a run report."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from ..controller import CONTROLLER_NAMES, make_controller
from ..core import RngStream, seconds_to_us
from ..mobility import FieldSpec, MobilityModel, Point, distance
from ..netsim import Network
from .config import Config, ConfigError
from .metrics import FlowReport, MetricsReport

# The relay chain roams inside a town-sized region of the field rather than
# the whole 1 km square: with a 250 m radio range a random chain spread over
# 1 km^2 is disconnected almost all of the time.
TOWN = {"field.width": 300.0, "field.height": 300.0}

SCENARIOS: dict[str, dict[str, Any]] = {
    # mobile, average node speed 17.5 m/s (uniform over [0, 35])
    "efficiency": {**TOWN},
    "goodput_static": {**TOWN, "mobility.speed": 0.0},
    "goodput_mobile": {**TOWN},
    "cwnd": {**TOWN},
    "bandwidth": {**TOWN, "link.loss_rate": 0.01},
}

GOODPUT_SPEEDS = (0.0, 10.0, 25.0, 35.0)

MAX_PLACEMENT_TRIES = 10_000


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    controller: str = "ub"
    seed: int = 42
    overrides: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.name!r}; expected one of {', '.join(SCENARIOS)}")
        if self.controller not in CONTROLLER_NAMES:
            raise ConfigError(
                f"unknown controller {self.controller!r}; "
                f"expected one of {', '.join(CONTROLLER_NAMES)}")

    def config(self) -> Config:
        """Effective config: scenario preset, then ``overrides``, then the seed."""
        return Config({**SCENARIOS[self.name], **self.overrides, "sim.seed": self.seed})


def connected_placement(spec: FieldSpec, n_nodes: int, seed: int) -> list[Point]:
    """Uniform positions for a chain, redrawn until every hop is in range."""
    rng = RngStream.derive(seed, "placement")
    for _ in range(MAX_PLACEMENT_TRIES):
        pts = [(rng.uniform(0.0, spec.width), rng.uniform(0.0, spec.height))
               for _ in range(n_nodes)]
        if all(distance(pts[i], pts[i + 1]) <= spec.range for i in range(n_nodes - 1)):
            return pts
    raise ConfigError(
        f"could not place a connected {n_nodes}-node chain in a "
        f"{spec.width}x{spec.height} m field with {spec.range} m range")


def build_mobility(cfg: Config) -> MobilityModel:
    spec = cfg.field_spec()
    n = cfg["link.hops"] + 1
    seed = cfg["sim.seed"]
    return MobilityModel(spec, seed, n, static=cfg.static,
                         initial=connected_placement(spec, n, seed))


def run_scenario(spec: ScenarioSpec, *, record_events: bool = False) -> MetricsReport:
    cfg = spec.config()
    return run_config(spec.name, spec.controller, cfg, record_events=record_events)[0]


def run_config(name: str, controller: str, cfg: Config, *,
               record_events: bool = False) -> tuple[MetricsReport, Network, MobilityModel]:
    seed = cfg["sim.seed"]
    duration = cfg["sim.duration_s"]
    horizon = seconds_to_us(duration)
    mobility = build_mobility(cfg)
    hops = cfg["link.hops"]
    if cfg.static:
        outages: list[list[tuple[int, int]]] = [[] for _ in range(hops)]
    else:
        outages = [mobility.outage_schedule([k, k + 1], horizon, cfg["mobility.dt"])
                   for k in range(hops)]
    net = Network(cfg.network_config(), seed, hop_outages=outages,
                  record_events=record_events)
    ctl_cfg = cfg.controller_config()
    competitor = cfg["flows.competitor"]
    for i in range(cfg["flows.count"]):
        name_i = controller if i == 0 or competitor == "same" else competitor
        net.add_flow(make_controller(name_i, ctl_cfg))
    net.run(duration)
    report = MetricsReport(
        scenario=name, controller=controller, seed=seed, duration_s=duration,
        speed=cfg["mobility.speed"], seg_size=cfg["controller.seg_size"],
        header_size=cfg["packet.header_bytes"], ack_size=cfg["packet.ack_bytes"],
        bottleneck_bps=cfg["link.bandwidth_bps"],
        flows=[_flow_report(net, i) for i in range(len(net.flows))],
        drops=sum(link.drops for link in net.links), max_queue=net.max_queue,
        queue_capacity=cfg["link.queue_packets"], cbr_sent=net.cbr_sent,
        cbr_delivered=net.cbr_delivered, acks_lost=net.acks_lost, outages=outages,
        stability_band=cfg["metrics.stability_band"],
        efficiency_bucket_s=cfg["metrics.efficiency_bucket_s"],
    )
    return report, net, mobility


def _flow_report(net: Network, i: int) -> FlowReport:
    flow, rx = net.flows[i], net.receivers[i]
    first_sent = flow.first_sent_at
    early = sum(1 for seq, t in enumerate(rx.deliver_times)
                if seq not in first_sent or first_sent[seq] >= t)
    return FlowReport(
        flow_id=i, controller=flow.controller.name, samples=net.samples[i],
        ack_log=flow.ack_log, deliver_times=rx.deliver_times,
        data_tx=flow.stats.data_tx, retransmits=flow.stats.retransmits,
        acks_sent=rx.acks_sent, timeouts=flow.stats.timeouts,
        fast_retransmits=flow.stats.fast_retransmits,
        window_violations=flow.stats.window_violations,
        unique_sent=len(first_sent), delivered_before_sent=early,
    )


def expand_controllers(text: str) -> list[str]:
    if text == "all":
        return list(CONTROLLER_NAMES)
    names = [c.strip() for c in text.split(",") if c.strip()]
    for name in names:
        if name not in CONTROLLER_NAMES:
            raise ConfigError(
                f"unknown controller {name!r}; expected one of "
                f"{', '.join(CONTROLLER_NAMES)} or 'all'")
    return names


def run_matrix(scenario: str, controllers: Sequence[str], seeds: Iterable[int],
               overrides: Mapping[str, Any] | None = None) -> list[MetricsReport]:
    """Every (controller, seed) cell, controllers outermost."""
    seeds = list(seeds)
    return [run_scenario(ScenarioSpec(scenario, c, s, dict(overrides or {})))
            for c in controllers for s in seeds]
