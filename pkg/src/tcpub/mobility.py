"""Random Waypoint mobility over a rectangular field and disk-range links."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import RngStream, SimTime, seconds_to_us, us_to_seconds

Point = tuple[float, float]

SPEED_FLOOR = 0.1


@dataclass(frozen=True)
class FieldSpec:
    width: float = 1000.0
    height: float = 1000.0
    range: float = 250.0
    v_min: float = 0.0
    v_max: float = 35.0
    pause: float = 5.0
    random_pause: bool = False
    v_floor: float = SPEED_FLOOR

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.range <= 0:
            raise ValueError("field width, height and range must be positive")
        if not 0 <= self.v_min <= self.v_max:
            raise ValueError(f"need 0 <= v_min <= v_max, got {self.v_min}, {self.v_max}")
        if self.pause < 0:
            raise ValueError("pause must be nonnegative")

    def contains(self, p: Point, tol: float = 1e-9) -> bool:
        return -tol <= p[0] <= self.width + tol and -tol <= p[1] <= self.height + tol


@dataclass(frozen=True)
class Leg:
    start: Point
    end: Point
    speed: float
    depart: int
    arrive: int
    pause_until: int

    @classmethod
    def build(cls, start: Point, end: Point, speed: float, depart: int,
              pause_s: float) -> "Leg":
        travel = distance(start, end) / speed
        arrive = depart + seconds_to_us(travel)
        return cls(start, end, speed, depart, arrive, arrive + seconds_to_us(pause_s))

    @classmethod
    def stationary(cls, at: Point, depart: int, until: int) -> "Leg":
        return cls(at, at, 0.0, depart, depart, until)


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def link_up(a: Point, b: Point, range_m: float) -> bool:
    return distance(a, b) <= range_m


def position_at(leg: Leg, t: int) -> Point:
    if t < leg.depart:
        raise ValueError(f"time {t} precedes leg departure {leg.depart}")
    if t >= leg.arrive:
        return leg.end
    frac = (t - leg.depart) / (leg.arrive - leg.depart)
    (x0, y0), (x1, y1) = leg.start, leg.end
    return (x0 + (x1 - x0) * frac, y0 + (y1 - y0) * frac)


def next_leg(spec: FieldSpec, start: Point, now: int, rng: RngStream) -> Leg:
    dest = (rng.uniform(0.0, spec.width), rng.uniform(0.0, spec.height))
    lo = max(spec.v_min, spec.v_floor)
    hi = max(spec.v_max, lo)
    speed = rng.uniform(lo, hi) if hi > lo else lo
    pause = rng.uniform(0.0, spec.pause) if spec.random_pause else spec.pause
    return Leg.build(start, dest, speed, now, pause)


@dataclass
class _Node:
    rng: RngStream
    legs: list[Leg] = field(default_factory=list)


class MobilityModel:
    """Per-node Random Waypoint trajectories, generated lazily and cached.

    ``static=True`` pins every node at its initial position.
    """

    def __init__(self, spec: FieldSpec, seed: int, n_nodes: int, *,
                 static: bool = False,
                 initial: Sequence[Point] | None = None) -> None:
        self.spec = spec
        self.static = static
        self._nodes: list[_Node] = []
        for i in range(n_nodes):
            rng = RngStream.derive(seed, "mobility", i)
            if initial is not None:
                start = initial[i]
            else:
                start = (rng.uniform(0.0, spec.width), rng.uniform(0.0, spec.height))
            if static:
                first = Leg.stationary(start, 0, 2**62)
            else:
                first = next_leg(spec, start, 0, rng)
            self._nodes.append(_Node(rng, [first]))

    @classmethod
    def scripted(cls, spec: FieldSpec, legs: Sequence[Sequence[Leg]]) -> "MobilityModel":
        """Fixed trajectories; each node rests at its last waypoint afterwards."""
        model = cls(spec, 0, 0)
        for i, node_legs in enumerate(legs):
            if not node_legs:
                raise ValueError(f"node {i} has no legs")
            chain = list(node_legs)
            last = chain[-1]
            chain.append(Leg.stationary(last.end, last.pause_until, 2**62))
            model._nodes.append(_Node(RngStream.derive(0, "scripted", i), chain))
        return model

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    def _leg_at(self, node_id: int, t: int) -> Leg:
        node = self._nodes[node_id]
        legs = node.legs
        while legs[-1].pause_until <= t:
            last = legs[-1]
            legs.append(next_leg(self.spec, last.end, last.pause_until, node.rng))
        # legs are contiguous; scan back from the newest
        for leg in reversed(legs):
            if leg.depart <= t:
                return leg
        return legs[0]

    def legs(self, node_id: int, horizon: int) -> list[Leg]:
        self._leg_at(node_id, horizon)
        return [leg for leg in self._nodes[node_id].legs if leg.depart <= horizon]

    def position(self, node_id: int, t: int) -> Point:
        return position_at(self._leg_at(node_id, t), t)

    def outage_schedule(self, path: Sequence[int], horizon: int,
                        dt: float = 0.1) -> list[tuple[int, int]]:
        """Down intervals ``[start, end)`` of a multi-hop path, sampled every ``dt``."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        step = seconds_to_us(dt)
        if len(path) < 2:
            return []
        r = self.spec.range
        intervals: list[tuple[int, int]] = []
        down_since: int | None = None
        t = 0
        while t <= horizon:
            pts = [self.position(n, t) for n in path]
            up = all(distance(pts[i], pts[i + 1]) <= r for i in range(len(pts) - 1))
            if not up and down_since is None:
                down_since = t
            elif up and down_since is not None:
                intervals.append((down_since, t))
                down_since = None
            t += step
        if down_since is not None:
            intervals.append((down_since, t))
        return intervals

    def write_trace(self, path: Path | str, horizon: int, dt: float = 1.0) -> None:
        step = seconds_to_us(dt)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["time_s", "node_id", "x_m", "y_m"])
            for t, node_id, (x, y) in self.trace(horizon, step):
                writer.writerow([repr(us_to_seconds(t)), node_id, repr(x), repr(y)])

    def trace(self, horizon: int, step: int) -> Iterable[tuple[int, int, Point]]:
        t = 0
        while t <= horizon:
            for node_id in range(self.n_nodes):
                yield SimTime(t), node_id, self.position(node_id, t)
            t += step


def outage_schedule(model: MobilityModel, path: Sequence[int], horizon: int,
                    dt: float = 0.1) -> list[tuple[int, int]]:
    return model.outage_schedule(path, horizon, dt)
