"""CSV files, aligned text tables and the SVG trend chart.

Every writer formats numbers with fixed precision, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

from .errors import IoFailure
from .evaluation import DepthBinAP, EvalResult
from .trend import OracleRow, TrendReport, VerificationOutcome

MISSING = "NA"
EVAL_COLUMNS = ("delta_h", "AP3D70", "AP3D50", "MDE", "matched", "missed")
TREND_COLUMNS = ("model", "delta_h", "MDE", "unclamped_MDE", "predicted_MDE", "AP3D70", "AP3D50", "matched", "missed")
ORACLE_COLUMNS = ("mask", "delta_h", "AP3D70", "AP3D50", "MDE", "matched")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#7f7f7f")


def _mde(value: float | None) -> str:
    return MISSING if value is None else f"{value:+.4f}"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Plain-text table, first column left aligned and the rest right aligned."""
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]

    def line(cells: Sequence[str]) -> str:
        out = [str(cells[0]).ljust(widths[0])]
        out += [str(c).rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join(out).rstrip()

    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(header), rule, *(line(r) for r in rows)]) + "\n"


def write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# Evaluation


def _eval_cells(r: EvalResult) -> list[str]:
    return [f"{r.delta_h:+.2f}", f"{r.ap3d_70:.2f}", f"{r.ap3d_50:.2f}", _mde(r.mde), str(r.matched), str(r.missed)]


def eval_csv(results: Sequence[EvalResult]) -> str:
    return _csv_text(EVAL_COLUMNS, [_eval_cells(r) for r in results])


def eval_table(results: Sequence[EvalResult]) -> str:
    return format_table(EVAL_COLUMNS, [_eval_cells(r) for r in results])


def ap_by_depth_csv(rows: Sequence[DepthBinAP]) -> str:
    return _csv_text(
        ("depth_low", "depth_high", "iou_threshold", "AP3D", "ground_truth"),
        [[f"{r.depth_low:.1f}", f"{r.depth_high:.1f}", f"{r.iou_threshold:.2f}", f"{r.ap3d:.2f}", str(r.ground_truth)]
         for r in rows],
    )


# Trend


def _trend_cells(report: TrendReport) -> list[list[str]]:
    rows = []
    for key, trend in report.models.items():
        for r in trend.rows:
            rows.append([key, f"{r.delta_h:+.2f}", _mde(r.mde), _mde(r.unclamped_mde), _mde(r.predicted_mde),
                         f"{r.ap3d_70:.2f}", f"{r.ap3d_50:.2f}", str(r.matched), str(r.missed)])
    return rows


def trend_csv(report: TrendReport) -> str:
    return _csv_text(TREND_COLUMNS, _trend_cells(report))


def trend_table(report: TrendReport) -> str:
    slopes = [[key, _mde(t.slope), _mde(t.predicted_slope)] for key, t in report.models.items()]
    return (
        format_table(TREND_COLUMNS, _trend_cells(report))
        + "\n"
        + format_table(("model", "slope", "predicted_slope"), slopes)
    )


def verification_text(outcome: VerificationOutcome) -> str:
    lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}" for c in outcome.checks]
    verdict = "OK" if outcome.passed else f"FAILED: {len(outcome.failures)}/{len(outcome.checks)} checks"
    return "\n".join([*lines, verdict]) + "\n"


def trend_svg(report: TrendReport, width: int = 640, height: int = 400) -> str:
    """Line chart of MDE against the height change, one polyline per model."""
    left, right, top, bottom = 70, 170, 30, 50
    points = [(r.delta_h, r.mde) for t in report.models.values() for r in t.rows if r.mde is not None]
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] + [0.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    plot_w, plot_h = width - left - right, height - top - bottom

    def sx(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return top + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{sy(0.0):.2f}" x2="{left + plot_w}" y2="{sy(0.0):.2f}" '
        f'stroke="#bbbbbb" stroke-dasharray="4 3"/>',
    ]
    for dh in report.grid:
        out.append(f'<text x="{sx(dh):.2f}" y="{top + plot_h + 18}" font-size="11" '
                   f'text-anchor="middle">{dh:+.2f}</text>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_lo + frac * (y_hi - y_lo)
        out.append(f'<text x="{left - 6}" y="{sy(y) + 4:.2f}" font-size="11" text-anchor="end">{y:+.2f}</text>')
    out.append(f'<text x="{left + plot_w / 2:.2f}" y="{height - 10}" font-size="12" '
               f'text-anchor="middle">camera height change (m)</text>')
    out.append(f'<text x="16" y="{top + plot_h / 2:.2f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + plot_h / 2:.2f})">mean depth error (m)</text>')
    for i, (key, trend) in enumerate(report.models.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(r.delta_h):.2f},{sy(r.mde):.2f}" for r in trend.rows if r.mde is not None)
        if coords:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 16 * i + 8
        out.append(f'<line x1="{width - right + 12}" y1="{ly}" x2="{width - right + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - right + 38}" y="{ly + 4}" font-size="11">{key}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# Oracle


def _oracle_cells(rows: Sequence[OracleRow]) -> list[list[str]]:
    return [[r.mask, f"{r.delta_h:+.2f}", f"{r.ap3d_70:.2f}", f"{r.ap3d_50:.2f}", _mde(r.mde), str(r.matched)]
            for r in rows]


def oracle_csv(rows: Sequence[OracleRow]) -> str:
    return _csv_text(ORACLE_COLUMNS, _oracle_cells(rows))


def oracle_table(rows: Sequence[OracleRow]) -> str:
    return format_table(ORACLE_COLUMNS, _oracle_cells(rows))
