from __future__ import annotations

import pytest

from hrm3d.depth_models import ModelParameters
from hrm3d.errors import IoFailure
from hrm3d.evaluation import DepthBinAP, EvalResult
from hrm3d.report import (
    MISSING,
    ap_by_depth_csv,
    eval_csv,
    eval_table,
    format_table,
    oracle_csv,
    trend_csv,
    trend_svg,
    trend_table,
    verification_text,
    write_text,
)
from hrm3d.trend import ModelTrend, OracleRow, TrendReport, TrendRow, VerificationOutcome


def _row(delta_h: float, mde: float | None, unclamped_mde: float | None = None) -> TrendRow:
    return TrendRow(delta_h=delta_h, mde=mde, predicted_mde=unclamped_mde, unclamped_mde=unclamped_mde,
                    ap3d_70=12.5, ap3d_50=40.0, matched=10, missed=2)


def _report() -> TrendReport:
    params = ModelParameters(beta=0.1, z_max=60.0, z_min=15.0)
    return TrendReport(
        grid=(0.0, 0.76),
        sigma=0.0,
        parameters=params,
        models={
            "source-regressed": ModelTrend(model="source-regressed", rows=[_row(0.0, 0.0, 0.0), _row(0.76, -3.25, -3.25)]),
            "ground": ModelTrend(model="ground", rows=[_row(0.0, 0.0), _row(0.76, None)]),
        },
    )


def test_format_table_alignment():
    text = format_table(("name", "value"), [["a", "1.00"], ["longer", "10.00"]])
    lines = text.splitlines()
    assert lines[0] == "name    value"
    assert lines[1] == "-" * 13
    assert lines[2] == "a        1.00"
    assert lines[3] == "longer  10.00"


def test_eval_outputs():
    result = EvalResult(delta_h=0.76, ap3d_70=12.5, ap3d_50=50.0, mde=-1.5, matched=3, missed=1)
    assert eval_csv([result]) == "delta_h,AP3D70,AP3D50,MDE,matched,missed\n+0.76,12.50,50.00,-1.5000,3,1\n"
    empty = EvalResult(ap3d_70=0.0, ap3d_50=0.0)
    assert MISSING in eval_table([empty])


def test_ap_by_depth_csv():
    rows = [DepthBinAP(depth_low=0.0, depth_high=20.0, iou_threshold=0.7, ap3d=75.0, ground_truth=4)]
    assert ap_by_depth_csv(rows).splitlines()[1] == "0.0,20.0,0.70,75.00,4"


class TestTrendReports:
    """Tests for trend CSV, table and SVG output."""

    def setup_method(self):
        self.report = _report()

    def test_csv(self):
        lines = trend_csv(self.report).splitlines()
        assert lines[0] == "model,delta_h,MDE,unclamped_MDE,predicted_MDE,AP3D70,AP3D50,matched,missed"
        assert lines[2] == "source-regressed,+0.76,-3.2500,-3.2500,-3.2500,12.50,40.00,10,2"
        assert lines[4] == f"ground,+0.76,{MISSING},{MISSING},{MISSING},12.50,40.00,10,2"

    def test_csv_keeps_clamped_and_unclamped_means_apart(self):
        trend = ModelTrend(model="source-regressed", rows=[_row(0.38, -6.47, -5.95)])
        report = self.report.model_copy(update={"grid": (0.38,), "models": {"source-regressed": trend}})
        assert trend_csv(report).splitlines()[1] == "source-regressed,+0.38,-6.4700,-5.9500,-5.9500,12.50,40.00,10,2"

    def test_table_lists_slopes(self):
        text = trend_table(self.report)
        assert "predicted_slope" in text
        assert "-4.2763" in text

    def test_svg(self):
        svg = trend_svg(self.report)
        assert svg.startswith("<svg")
        assert svg.rstrip().endswith("</svg>")
        assert svg.count("<polyline") == 2
        assert "source-regressed" in svg
        assert svg == trend_svg(self.report)


def test_verification_text():
    outcome = VerificationOutcome()
    outcome.add("ground slope", True, "slope +1.0")
    assert verification_text(outcome) == "PASS  ground slope: slope +1.0\nOK\n"
    outcome.add("fused slope", False, "too steep")
    assert verification_text(outcome).endswith("FAILED: 1/2 checks\n")


def test_oracle_csv():
    rows = [OracleRow(mask="baseline", delta_h=0.76, ap3d_70=1.0, ap3d_50=5.0, mde=None, matched=0)]
    assert oracle_csv(rows).splitlines()[1] == f"baseline,+0.76,1.00,5.00,{MISSING},0"


def test_write_text(tmp_path):
    path = tmp_path / "nested" / "out.txt"
    write_text(path, "hello\n")
    assert path.read_text() == "hello\n"
    with pytest.raises(IoFailure):
        write_text(path / "child.txt", "x")
