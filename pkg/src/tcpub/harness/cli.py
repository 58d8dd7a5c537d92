"""Command line: ``run``, ``sweep`` and ``validate``.

Exit status is 0 on success, 2 on a configuration error and 1 on any other
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .config import KEYS, Config, ConfigError, format_config, parse_config_text, parse_values
from .export import cell_dir, export, write_summary
from .metrics import MetricsReport
from .scenarios import SCENARIOS, ScenarioSpec, expand_controllers, run_config

log = logging.getLogger("tcpub")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("no seeds given")
    return seeds


def _scenarios(text: str) -> list[str]:
    if text == "all":
        return list(SCENARIOS)
    names = [s.strip() for s in text.split(",") if s.strip()]
    for name in names:
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}; expected one of "
                              f"{', '.join(SCENARIOS)} or 'all'")
    return names


def _file_overrides(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text, str(p))


def _set_overrides(items: Sequence[str]) -> dict[str, Any]:
    raw = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        raw[key] = value
    return parse_values(raw)


def run_cells(scenarios: Sequence[str], controllers: Sequence[str], seeds: Sequence[int],
              overrides: dict[str, Any], out: Path) -> list[MetricsReport]:
    # build every config first so a bad combination fails before any run starts
    specs = [ScenarioSpec(s, c, seed, overrides)
             for s in scenarios for c in controllers for seed in seeds]
    configs = [spec.config() for spec in specs]
    reports = []
    for spec, cfg in zip(specs, configs):
        log.info("running %s/%s seed %d", spec.name, spec.controller, spec.seed)
        report, _, mobility = run_config(spec.name, spec.controller, cfg)
        export(report, cell_dir(out, report), mobility, cfg["mobility.trace_dt"])
        reports.append(report)
    write_summary(reports, out / "summary.csv")
    return reports


def cmd_run(args: argparse.Namespace) -> int:
    overrides = {**_file_overrides(args.config), **_set_overrides(args.set)}
    reports = run_cells(_scenarios(args.scenario), expand_controllers(args.controller),
                        _seeds(args.seed), overrides, Path(args.out))
    print(f"wrote {len(reports)} run(s) to {args.out}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.param not in KEYS:
        raise ConfigError(f"unknown config key {args.param!r}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    base = {**_file_overrides(args.config), **_set_overrides(args.set)}
    scenarios = _scenarios(args.scenario)
    controllers = expand_controllers(args.controller)
    seeds = _seeds(args.seed)
    parsed = [parse_values({args.param: v})[args.param] for v in values]
    total = 0
    for text, value in zip(values, parsed):
        out = Path(args.out) / f"{args.param}={text}"
        total += len(run_cells(scenarios, controllers, seeds,
                               {**base, args.param: value}, out))
    print(f"wrote {total} run(s) over {len(values)} value(s) to {args.out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = Config(_file_overrides(args.config))
    if args.print:
        sys.stdout.write(format_config(cfg))
    else:
        print(f"{args.config}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tcpub", description="Deterministic TCP-UB / Vegas / Westwood comparison lab.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log each run")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", default="cwnd",
                       help=f"one of {', '.join(SCENARIOS)}, a comma list or 'all'")
        p.add_argument("--controller", default="all", help="ub, vegas, westwood or all")
        p.add_argument("--seed", default="42", help="seed or comma-separated seeds")
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--out", default="out", help="output directory")

    run = sub.add_parser("run", help="run scenarios and write CSV/SVG artifacts")
    add_run_args(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="repeat a run for each value of one config key")
    add_run_args(sweep)
    sweep.add_argument("--param", required=True, help="dotted config key to vary")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.set_defaults(func=cmd_sweep)

    validate = sub.add_parser("validate", help="parse and check a config file")
    validate.add_argument("--config", required=True)
    validate.add_argument("--print", action="store_true", help="print the effective config")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
