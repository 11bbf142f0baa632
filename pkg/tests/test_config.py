from __future__ import annotations

from pathlib import Path

import pytest

from hrm3d.config import SEED_ENV, RunConfig, build_config, parse_config_text
from hrm3d.errors import ConfigInvalid


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "run.yaml"
    path.write_text(text, encoding="utf-8")
    return path


class TestPrecedence:
    """Tests for flag, file and environment precedence."""

    def test_defaults(self):
        cfg = build_config(environ={})
        assert cfg == RunConfig()
        assert cfg.run.seed == 0
        assert cfg.sweep.grid == (-0.70, -0.35, 0.0, 0.38, 0.76)
        assert cfg.sweep.oracle_association == "image"

    def test_environment_seed(self):
        assert build_config(environ={SEED_ENV: "9"}).run.seed == 9

    def test_file_beats_environment(self, tmp_path):
        path = _write(tmp_path, "run:\n  seed: 4\n")
        assert build_config(path, environ={SEED_ENV: "9"}).run.seed == 4

    def test_flags_beat_file(self, tmp_path):
        path = _write(tmp_path, "run:\n  seed: 4\n  frames: 30\nmodels:\n  sigma: 0.1\n")
        cfg = build_config(path, {"run": {"seed": 11, "frames": None}, "models": {"sigma": 0.0}}, environ={})
        assert cfg.run.seed == 11
        assert cfg.run.frames == 30
        assert cfg.models.sigma == 0.0

    def test_bad_environment_seed(self):
        with pytest.raises(ConfigInvalid, match=SEED_ENV):
            build_config(environ={SEED_ENV: "many"})

    def test_sweep_config(self, tmp_path):
        path = _write(tmp_path, (
            "run:\n  frames: 12\n  calibration_frames: 30\n"
            "scene:\n  depth_range: [10.0, 30.0]\n"
            "sweep:\n  grid: [0.0, 0.38]\n  models: [ground]\n"
        ))
        sweep = build_config(path, environ={}).sweep_config()
        assert sweep.frames == 12
        assert sweep.calibration_frames == 30
        assert sweep.grid == (0.0, 0.38)
        assert sweep.models == ("ground",)
        assert sweep.scene.depth_range == (10.0, 30.0)

    def test_canonical_yaml_is_stable(self):
        assert build_config(environ={}).canonical_yaml() == RunConfig().canonical_yaml()


class TestValidation:
    """Tests for configuration validation."""

    def test_unknown_section_reports_line(self, tmp_path):
        path = _write(tmp_path, "run:\n  seed: 1\nbogus:\n  x: 1\n")
        with pytest.raises(ConfigInvalid, match=r"run\.yaml:3: unknown section 'bogus'"):
            build_config(path, environ={})

    def test_bad_value_reports_line(self, tmp_path):
        path = _write(tmp_path, "run:\n  seed: 1\n  frames: -5\n")
        with pytest.raises(ConfigInvalid, match=r"run\.yaml:3: run\.frames"):
            build_config(path, environ={})

    def test_unknown_key(self, tmp_path):
        path = _write(tmp_path, "models:\n  gamma: 1\n")
        with pytest.raises(ConfigInvalid, match=r"models\.gamma"):
            build_config(path, environ={})

    def test_nested_sections_rejected(self):
        with pytest.raises(ConfigInvalid, match="nested"):
            parse_config_text("scene:\n  camera:\n    f: 1000\n", "cfg")

    def test_invalid_yaml(self):
        with pytest.raises(ConfigInvalid, match="invalid YAML"):
            parse_config_text("run: [1, 2\n", "cfg")

    def test_empty_file(self):
        assert parse_config_text("", "cfg") == {}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            build_config(tmp_path / "absent.yaml", environ={})
