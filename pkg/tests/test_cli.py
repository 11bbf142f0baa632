from __future__ import annotations

import csv
from pathlib import Path

import pytest
import yaml

from hrm3d.cli import EXIT_ERROR, EXIT_OK, EXIT_VERIFICATION, main


def _simulate(out: Path, *extra: str) -> int:
    return main(["simulate", "--out", str(out), "--frames", "4", "--delta-h", "0.76", "--seed", "3", *extra])


class TestSimulate:
    """Tests for the simulate command."""

    def test_writes_artifacts(self, tmp_path):
        out = tmp_path / "dh076"
        assert _simulate(out) == EXIT_OK
        assert sorted(p.name for p in (out / "gt").iterdir()) == [f"{i:06d}.txt" for i in range(4)]
        assert len(list((out / "pred").iterdir())) == 4
        assert (out / "scenes.csv").exists()
        assert (out / "models.yaml").exists()
        manifest = yaml.safe_load((out / "manifest.yaml").read_text())
        assert manifest["delta_h"] == 0.76
        assert manifest["seed"] == 3
        assert manifest["model"] == "source-regressed"

    def test_deterministic(self, tmp_path):
        assert _simulate(tmp_path / "a", "--model", "ground") == EXIT_OK
        assert _simulate(tmp_path / "b", "--model", "ground") == EXIT_OK
        for name in ("pred/000000.txt", "pred/000003.txt", "scenes.csv", "manifest.yaml", "models.yaml"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_frames(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path), "--frames", "0"]) == EXIT_OK
        assert (tmp_path / "manifest.yaml").exists()
        assert not (tmp_path / "gt").exists()


class TestEval:
    """Tests for the eval command."""

    def _run(self, tmp_path: Path) -> Path:
        out = tmp_path / "run"
        assert _simulate(out) == EXIT_OK
        return out

    def test_eval_reads_height_from_manifest(self, tmp_path, capsys):
        run = self._run(tmp_path)
        code = main(["eval", "--gt", str(run / "gt"), "--pred", str(run / "pred"), "--out", str(tmp_path / "eval")])
        assert code == EXIT_OK
        with (tmp_path / "eval" / "eval.csv").open(newline="") as fh:
            (row,) = list(csv.DictReader(fh))
        assert row["delta_h"] == "+0.76"
        assert float(row["MDE"]) < 0
        assert (tmp_path / "eval" / "ap_by_depth.csv").exists()
        assert "AP3D70" in capsys.readouterr().out

    def test_frame_mismatch_is_an_error(self, tmp_path, capsys):
        run = self._run(tmp_path)
        (run / "pred" / "000002.txt").unlink()
        code = main(["eval", "--gt", str(run / "gt"), "--pred", str(run / "pred"), "--out", str(tmp_path / "eval")])
        assert code == EXIT_ERROR
        assert "000002" in capsys.readouterr().err

    def test_missing_gt_dir(self, tmp_path):
        code = main(["eval", "--gt", str(tmp_path / "gt"), "--pred", str(tmp_path / "pred"),
                     "--out", str(tmp_path / "eval")])
        assert code == EXIT_ERROR


class TestSweepAndOracle:
    """Tests for the sweep and oracle commands."""

    def test_sweep_passes_verification(self, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        config.write_text("run:\n  frames: 60\n  calibration_frames: 100\nmodels:\n  sigma: 0.0\n")
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(config), "--out", str(out)]) == EXIT_OK
        for name in ("trend.csv", "trend.txt", "trend.svg", "verification.txt"):
            assert (out / name).exists()
        assert (out / "verification.txt").read_text().endswith("OK\n")
        assert "verification checks passed" in capsys.readouterr().out

    def test_failed_verification_exit_code(self, tmp_path, capsys):
        code = main(["sweep", "--out", str(tmp_path), "--frames", "3", "--grid", "0",
                     "--models", "source-regressed"])
        assert code == EXIT_VERIFICATION
        assert "FAILED" in capsys.readouterr().err

    def test_sweep_is_deterministic(self, tmp_path):
        codes = []
        for name in ("a", "b"):
            codes.append(main(["sweep", "--out", str(tmp_path / name), "--frames", "5", "--grid", "0,0.76",
                               "--models", "source-regressed,ground", "--seed", "4"]))
        assert codes[0] == codes[1]
        for name in ("trend.csv", "trend.svg", "trend.txt", "verification.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_grid_without_zero(self, tmp_path):
        assert main(["sweep", "--out", str(tmp_path), "--frames", "3", "--grid", "0.38,0.76"]) == EXIT_ERROR

    def test_oracle(self, tmp_path):
        code = main(["oracle", "--out", str(tmp_path), "--frames", "5", "--grid", "0,0.76",
                     "--masks", "z,lwh", "--sigma", "0"])
        assert code == EXIT_OK
        with (tmp_path / "oracle.csv").open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["mask"] for r in rows] == ["baseline", "z", "lwh"] * 2

    def test_unknown_mask(self, tmp_path, capsys):
        assert main(["oracle", "--out", str(tmp_path), "--frames", "2", "--masks", "zq"]) == EXIT_ERROR
        assert "'q'" in capsys.readouterr().err


class TestUsage:
    """Tests for argument and configuration errors."""

    def test_unknown_model(self):
        with pytest.raises(SystemExit) as info:
            main(["simulate", "--model", "bogus"])
        assert info.value.code == EXIT_ERROR

    def test_missing_command(self):
        with pytest.raises(SystemExit) as info:
            main([])
        assert info.value.code == EXIT_ERROR

    def test_bad_config(self, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("run:\n  frames: many\n")
        assert main(["simulate", "--config", str(config), "--out", str(tmp_path)]) == EXIT_ERROR

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert "hrm3d" in capsys.readouterr().out
