"""Flat ``key = value`` configuration with dotted, typed keys.

Unknown keys are rejected so that typos fail loudly instead of silently
running the default experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

from ..controller import CONTROLLER_NAMES, ControllerConfig
from ..mobility import FieldSpec
from ..netsim import NetworkConfig


class ConfigError(ValueError):
    """Bad configuration: unknown key, malformed value or failed invariant."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str) -> Any:
        if text.strip().lower() in ("", "none", "off"):
            return None
        return conv(text)
    return parse


def _finite(text: str) -> float:
    x = float(text)
    if not math.isfinite(x):
        raise ValueError(f"not a finite number: {text!r}")
    return x


def _competitor(text: str) -> str:
    name = text.strip()
    if name != "same" and name not in CONTROLLER_NAMES:
        raise ValueError(f"expected 'same' or one of {', '.join(CONTROLLER_NAMES)}")
    return name


@dataclass(frozen=True)
class Key:
    default: Any
    parse: Callable[[str], Any]
    help: str = ""


KEYS: dict[str, Key] = {
    "sim.duration_s": Key(140.0, _finite, "simulated seconds"),
    "sim.seed": Key(42, int),
    "sim.sample_interval_s": Key(0.1, _finite, "cwnd trace sampling period"),
    "controller.alpha": Key(1.0, _finite),
    "controller.gamma": Key(2.0, _finite),
    "controller.beta": Key(3.0, _finite),
    "controller.seg_size": Key(1040, int, "bytes on the wire, header included"),
    "controller.initial_cwnd": Key(2, int),
    "controller.initial_ssthresh": Key(32, int),
    "controller.ewma_gain": Key(0.9, _finite),
    "field.width": Key(1000.0, _finite),
    "field.height": Key(1000.0, _finite),
    "field.range": Key(250.0, _finite),
    "field.v_min": Key(0.0, _finite),
    "field.v_max": Key(35.0, _finite),
    "field.v_floor": Key(0.1, _finite),
    "field.pause": Key(5.0, _finite),
    "field.random_pause": Key(False, _bool),
    "mobility.enabled": Key(True, _bool),
    "mobility.speed": Key(None, _optional(_finite), "fixed node speed; 0 pins nodes"),
    "mobility.dt": Key(0.1, _finite, "outage sampling step"),
    "mobility.trace_dt": Key(1.0, _finite),
    "link.hops": Key(3, int),
    "link.bandwidth_bps": Key(2_000_000.0, _finite),
    "link.prop_delay_s": Key(0.010, _finite),
    "link.queue_packets": Key(80, int),
    "link.loss_rate": Key(0.0, _finite),
    "link.ack_loss": Key(False, _bool, "apply random loss to ACKs too"),
    "packet.header_bytes": Key(40, int),
    "packet.ack_bytes": Key(40, int),
    "cbr.rate_pps": Key(8.0, _optional(_finite)),
    "cbr.sources": Key(1, int),
    "flows.count": Key(2, int),
    "flows.competitor": Key("same", _competitor),
    "rto.min_s": Key(0.2, _finite),
    "rto.max_s": Key(60.0, _finite),
    "metrics.stability_band": Key(0.2, _finite),
    "metrics.efficiency_bucket_s": Key(10.0, _finite),
}


class Config(Mapping[str, Any]):
    """Immutable mapping of every known key to its effective value."""

    def __init__(self, values: Mapping[str, Any] | None = None) -> None:
        merged = {k: key.default for k, key in KEYS.items()}
        for k, v in (values or {}).items():
            if k not in KEYS:
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = v
        self._values = merged
        self._validate()

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        changed = {k: v for k, v in self._values.items() if v != KEYS[k].default}
        return f"Config({changed})"

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Config":
        return Config({**self._values, **overrides})

    def with_text_overrides(self, overrides: Mapping[str, str]) -> "Config":
        return self.with_overrides(parse_values(overrides))

    def _validate(self) -> None:
        v = self._values
        try:
            self.controller_config()
            self.field_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (v["sim.duration_s"] > 0, "sim.duration_s must be positive"),
            (v["sim.sample_interval_s"] > 0, "sim.sample_interval_s must be positive"),
            (v["link.hops"] >= 1, "link.hops must be >= 1"),
            (v["link.bandwidth_bps"] > 0, "link.bandwidth_bps must be positive"),
            (v["link.prop_delay_s"] >= 0, "link.prop_delay_s must be nonnegative"),
            (v["link.queue_packets"] >= 1, "link.queue_packets must be >= 1"),
            (0 <= v["link.loss_rate"] < 1, "link.loss_rate must be in [0, 1)"),
            (v["flows.count"] >= 1, "flows.count must be >= 1"),
            (v["cbr.sources"] >= 0, "cbr.sources must be >= 0"),
            (v["cbr.rate_pps"] is None or v["cbr.rate_pps"] > 0, "cbr.rate_pps must be positive"),
            (v["mobility.dt"] > 0, "mobility.dt must be positive"),
            (v["mobility.trace_dt"] > 0, "mobility.trace_dt must be positive"),
            (v["mobility.speed"] is None or v["mobility.speed"] >= 0,
             "mobility.speed must be nonnegative"),
            (0 < v["rto.min_s"] <= v["rto.max_s"], "need 0 < rto.min_s <= rto.max_s"),
            (0 <= v["packet.header_bytes"] < v["controller.seg_size"],
             "packet.header_bytes must be smaller than controller.seg_size"),
            (v["packet.ack_bytes"] > 0, "packet.ack_bytes must be positive"),
            (0 < v["metrics.stability_band"] < 1, "metrics.stability_band must be in (0, 1)"),
            (v["metrics.efficiency_bucket_s"] > 0, "metrics.efficiency_bucket_s must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    # typed views ---------------------------------------------------------

    def controller_config(self) -> ControllerConfig:
        v = self._values
        return ControllerConfig(
            alpha=v["controller.alpha"], gamma=v["controller.gamma"], beta=v["controller.beta"],
            seg_size=v["controller.seg_size"], initial_cwnd=v["controller.initial_cwnd"],
            initial_ssthresh=v["controller.initial_ssthresh"], ewma_gain=v["controller.ewma_gain"],
        )

    def field_spec(self) -> FieldSpec:
        v = self._values
        v_min, v_max = v["field.v_min"], v["field.v_max"]
        if v["mobility.speed"] is not None:
            v_min = v_max = v["mobility.speed"]
        return FieldSpec(
            width=v["field.width"], height=v["field.height"], range=v["field.range"],
            v_min=v_min, v_max=v_max, pause=v["field.pause"],
            random_pause=v["field.random_pause"], v_floor=v["field.v_floor"],
        )

    @property
    def static(self) -> bool:
        return not self._values["mobility.enabled"] or self._values["mobility.speed"] == 0

    def network_config(self) -> NetworkConfig:
        v = self._values
        return NetworkConfig(
            hops=v["link.hops"], bandwidth_bps=v["link.bandwidth_bps"],
            prop_delay_s=v["link.prop_delay_s"], queue_packets=v["link.queue_packets"],
            loss_rate=v["link.loss_rate"], ack_loss=v["link.ack_loss"],
            seg_size=v["controller.seg_size"], header_size=v["packet.header_bytes"],
            ack_size=v["packet.ack_bytes"], cbr_rate_pps=v["cbr.rate_pps"],
            cbr_sources=v["cbr.sources"], sample_interval_s=v["sim.sample_interval_s"],
            rto_min_s=v["rto.min_s"], rto_max_s=v["rto.max_s"],
            ewma_gain=v["controller.ewma_gain"],
        )


def parse_values(raw: Mapping[str, str]) -> dict[str, Any]:
    out = {}
    for key, text in raw.items():
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = KEYS[key].parse(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return out


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        raw[key] = value
    return parse_values(raw)


def load_config(path: str | Path | None, base: Mapping[str, Any] | None = None) -> Config:
    values = dict(base or {})
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(p)))
    return Config(values)


def format_config(cfg: Config) -> str:
    lines = []
    for key in KEYS:
        value = cfg[key]
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
