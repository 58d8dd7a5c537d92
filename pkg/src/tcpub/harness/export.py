"""CSV and SVG artifacts for finished runs.

Floats are written with ``repr`` so that re-running the same seed produces
byte-identical files and parsing a file back gives the exact in-memory values.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..mobility import MobilityModel
from .metrics import MetricsReport, efficiency_series, summary_row

CWND_COLUMNS = ("time_us", "flow_id", "controller", "cwnd_segments", "ssthresh_segments",
                "bwe_bps", "diff_segments", "action")
SUMMARY_COLUMNS = ("scenario", "controller", "seed", "goodput_bps", "efficiency_mbits_total",
                   "stability_index", "drops", "retransmits", "consumed_bits")
PROGRESS_COLUMNS = ("time_us", "flow_id", "acked_segments", "delivered_segments",
                    "sent_segments")


class ExportError(OSError):
    """Writing an artifact failed; the message names the offending path."""


def _cell(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


def cwnd_rows(report: MetricsReport) -> list[tuple[object, ...]]:
    return [(s.time, f.flow_id, f.controller, s.cwnd, s.ssthresh, float(s.bwe),
             float(s.diff), s.action)
            for f in report.flows for s in f.samples]


def progress_rows(report: MetricsReport) -> list[tuple[int, ...]]:
    return [(s.time, f.flow_id, s.acked_segments, s.delivered_segments, s.sent_segments)
            for f in report.flows for s in f.samples]


def summary_rows(reports: Iterable[MetricsReport]) -> list[tuple[object, ...]]:
    out = []
    for report in reports:
        row = summary_row(report)
        out.append(tuple(row[c] for c in SUMMARY_COLUMNS))
    return out


def write_summary(reports: Iterable[MetricsReport], path: Path | str) -> Path:
    return _write(Path(path), _csv_text(SUMMARY_COLUMNS, summary_rows(reports)))


def cell_dir(out_dir: Path | str, report: MetricsReport) -> Path:
    return Path(out_dir) / report.scenario / report.controller / f"seed{report.seed}"


def export(report: MetricsReport, out_dir: Path | str,
           mobility: MobilityModel | None = None, trace_dt: float = 1.0) -> list[Path]:
    """Write one run's traces and charts into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    written = [
        _write(out / "cwnd_trace.csv", _csv_text(CWND_COLUMNS, cwnd_rows(report))),
        _write(out / "acked_trace.csv", _csv_text(PROGRESS_COLUMNS, progress_rows(report))),
        _write(out / "summary.csv", _csv_text(SUMMARY_COLUMNS, summary_rows([report]))),
    ]
    if mobility is not None:
        path = out / "mobility.csv"
        try:
            mobility.write_trace(path, report.duration_us, trace_dt)
        except OSError as exc:
            raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from None
        written.append(path)
    title = f"{report.scenario} / {report.controller} / seed {report.seed}"
    flows = report.flows
    written.append(_write(out / "cwnd.svg", svg_chart(
        [[(s.time / 1e6, s.cwnd) for s in f.samples] for f in flows],
        [f"flow {f.flow_id} ({f.controller})" for f in flows],
        f"cwnd, {title}", "time (s)", "segments")))
    written.append(_write(out / "bwe.svg", svg_chart(
        [[(s.time / 1e6, s.bwe / 1e6) for s in f.samples] for f in flows],
        [f"flow {f.flow_id} ({f.controller})" for f in flows],
        f"bandwidth estimate, {title}", "time (s)", "Mb/s")))
    written.append(_write(out / "efficiency.svg", svg_chart(
        [efficiency_series(report, report.efficiency_bucket_s, f.flow_id) for f in flows],
        [f"flow {f.flow_id} ({f.controller})" for f in flows],
        f"acknowledged Mb per {report.efficiency_bucket_s:g} s, {title}", "time (s)", "Mb")))
    return written


def read_cwnd_trace(path: Path | str) -> list[tuple[int, int, str, int, int, float, float, str]]:
    """Parse a ``cwnd_trace.csv`` back into typed rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CWND_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [(int(r[0]), int(r[1]), r[2], int(r[3]), int(r[4]), float(r[5]),
                 float(r[6]), r[7]) for r in reader]


def read_progress_trace(path: Path | str) -> list[tuple[int, ...]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != PROGRESS_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [tuple(int(v) for v in r) for r in reader]


# SVG -------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 720, 360
_LEFT, _RIGHT, _TOP, _BOTTOM = 60, 170, 30, 40


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_chart(series: Sequence[Sequence[tuple[float, float]]], labels: Sequence[str],
              title: str, x_label: str, y_label: str) -> str:
    """A self-contained line chart: axes, one polyline per series and a legend."""
    points = [(x, y) for s in series for x, y in s if math.isfinite(x) and math.isfinite(y)]
    x0, x1 = (min(p[0] for p in points), max(p[0] for p in points)) if points else (0.0, 1.0)
    y1 = max((p[1] for p in points), default=1.0)
    y0 = min(0.0, min((p[1] for p in points), default=0.0))
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def sx(x: float) -> float:
        return _LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y: float) -> float:
        return _TOP + ph - (y - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        parts.append(f'<text x="{sx(fx):.1f}" y="{_TOP + ph + 14}" '
                     f'text-anchor="middle">{fx:.4g}</text>')
        parts.append(f'<text x="{_LEFT - 4}" y="{sy(fy) + 4:.1f}" '
                     f'text-anchor="end">{fy:.4g}</text>')
    parts.append(f'<text x="{_LEFT + pw / 2:.1f}" y="{_H - 6}" '
                 f'text-anchor="middle">{_esc(x_label)}</text>')
    parts.append(f'<text x="14" y="{_TOP + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {_TOP + ph / 2:.1f})">{_esc(y_label)}</text>')
    for k, s in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s
                          if math.isfinite(x) and math.isfinite(y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
                     f'points="{coords}"/>')
        label = labels[k] if k < len(labels) else f"series {k}"
        ly = _TOP + 12 + 16 * k
        parts.append(f'<line x1="{_LEFT + pw + 10}" y1="{ly}" x2="{_LEFT + pw + 30}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_LEFT + pw + 34}" y="{ly + 4}">{_esc(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
