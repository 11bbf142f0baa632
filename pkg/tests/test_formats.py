from __future__ import annotations

import pytest

from hrm3d.depth_models import NoiseModel, RegressedDepthModel, RegressedHead
from hrm3d.errors import FrameMismatch, IoFailure, LabelFormatError
from hrm3d.formats import (
    SCENE_CSV_COLUMNS,
    KittiLabelLine,
    format_labels,
    load_detection_sets,
    parse_labels,
    read_label_dir,
    read_scene_csv,
    write_label_dir,
    write_scene_csv,
)
from hrm3d.scene_sim import SceneConfig, emulate_detector, generate_scenes, observe

LINE = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59"


def _frames(n: int = 3, delta_h: float = 0.38):
    config = SceneConfig()
    head = RegressedHead(RegressedDepthModel.from_slope(0.1, 60.0, config.intrinsics))
    frames = []
    for i, scene in enumerate(generate_scenes(config, 2, n)):
        frames.append(emulate_detector(scene, observe(scene, delta_h), head, NoiseModel(sigma=0.5), i,
                                       delta_h=delta_h, reference=observe(scene, 0.0), frame_id=f"{i:06d}"))
    return frames


class TestKittiLabelLine:
    """Tests for KITTI label lines."""

    def test_parse(self):
        label = KittiLabelLine.parse(LINE)
        assert label.type == "Car"
        assert label.bbox == (587.01, 173.33, 614.12, 200.12)
        assert label.dimensions == (1.65, 1.67, 3.64)
        assert label.location == (-0.65, 1.71, 46.70)
        assert label.score is None

    def test_parse_with_score(self):
        label = KittiLabelLine.parse(LINE + " 0.87")
        assert label.score == 0.87
        assert label.to_line() == LINE + " 0.87"

    def test_format(self):
        assert KittiLabelLine.parse(LINE).to_line() == LINE

    def test_location_is_bottom_centre(self):
        det = KittiLabelLine.parse(LINE).to_detection()
        assert det.box.y == pytest.approx(1.71 - 1.65 / 2)
        assert det.box.bottom == pytest.approx(1.71)
        assert (det.box.l, det.box.w, det.box.h) == (3.64, 1.67, 1.65)
        assert det.box.score == 1.0
        assert det.projected.u_c == pytest.approx((587.01 + 614.12) / 2)

    @pytest.mark.parametrize("line", [
        "Car 0.00 0 -1.58 587.01",
        LINE + " 0.5 extra",
        LINE.replace("46.70", "far"),
    ])
    def test_malformed(self, line):
        with pytest.raises(LabelFormatError):
            KittiLabelLine.parse(line)

    def test_invalid_box(self):
        with pytest.raises(LabelFormatError):
            KittiLabelLine.parse(LINE.replace("3.64", "-3.64")).to_detection()

    def test_parse_labels_skips_blank_lines(self):
        assert len(parse_labels(f"{LINE}\n\n{LINE}\n")) == 2
        assert parse_labels("") == []


class TestLabelDirectories:
    """Tests for reading and writing label directories."""

    def setup_method(self):
        self.frames = _frames()

    def test_gt_has_no_score(self, tmp_path):
        write_label_dir(tmp_path / "gt", self.frames, kind="gt")
        write_label_dir(tmp_path / "pred", self.frames, kind="pred")
        gt_line = (tmp_path / "gt" / "000000.txt").read_text().splitlines()[0]
        pred_line = (tmp_path / "pred" / "000000.txt").read_text().splitlines()[0]
        assert len(gt_line.split()) == 15
        assert len(pred_line.split()) == 16

    def test_round_trip(self, tmp_path):
        write_label_dir(tmp_path / "gt", self.frames, kind="gt")
        write_label_dir(tmp_path / "pred", self.frames, kind="pred")
        loaded = load_detection_sets(tmp_path / "gt", tmp_path / "pred", delta_h=0.38)
        assert [ds.frame_id for ds in loaded] == ["000000", "000001", "000002"]
        for original, ds in zip(self.frames, loaded):
            assert ds.delta_h == 0.38
            assert len(ds.ground_truth) == len(original.ground_truth)
            assert len(ds.predictions) == len(original.predictions)
            for a, b in zip(original.predictions, ds.predictions):
                assert b.box.z == pytest.approx(a.box.z, abs=0.006)
                assert b.box.bottom == pytest.approx(a.box.bottom, abs=0.006)
                assert b.box.score == pytest.approx(a.box.score, abs=0.006)
                assert b.projected.bbox2D == pytest.approx(a.projected.bbox2D, abs=0.006)

    def test_written_text_is_deterministic(self):
        dets = self.frames[0].predictions
        assert format_labels(dets, with_score=True) == format_labels(dets, with_score=True)

    def test_frame_mismatch(self, tmp_path):
        write_label_dir(tmp_path / "gt", self.frames, kind="gt")
        write_label_dir(tmp_path / "pred", self.frames[:2], kind="pred")
        with pytest.raises(FrameMismatch) as info:
            load_detection_sets(tmp_path / "gt", tmp_path / "pred")
        assert info.value.missing_pred == ["000002"]
        assert info.value.missing_gt == []

    def test_empty_prediction_dir(self, tmp_path):
        write_label_dir(tmp_path / "gt", self.frames, kind="gt")
        (tmp_path / "pred").mkdir()
        loaded = load_detection_sets(tmp_path / "gt", tmp_path / "pred")
        assert len(loaded) == 3
        assert all(ds.predictions == [] for ds in loaded)

    def test_missing_gt_dir(self, tmp_path):
        with pytest.raises(IoFailure):
            read_label_dir(tmp_path / "nope")

    def test_bad_kind(self, tmp_path):
        with pytest.raises(ValueError):
            write_label_dir(tmp_path, self.frames, kind="both")


class TestSceneCsv:
    """Tests for the scene CSV."""

    def test_round_trip(self, tmp_path):
        frames = _frames(2)
        path = tmp_path / "scenes.csv"
        write_scene_csv(path, frames)
        assert path.read_text().splitlines()[0] == ",".join(SCENE_CSV_COLUMNS)
        loaded = read_scene_csv(path)
        assert [ds.frame_id for ds in loaded] == [ds.frame_id for ds in frames if ds.ground_truth or ds.predictions]
        for original, ds in zip(frames, loaded):
            assert ds.delta_h == pytest.approx(0.38)
            for a, b in zip(original.predictions, ds.predictions):
                assert b.gt_index == a.gt_index
                assert b.box.z == pytest.approx(a.box.z, abs=1e-6)
                assert b.projected.v_c == pytest.approx(a.projected.v_c, abs=1e-6)
                assert b.projected.truncated == a.projected.truncated

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            read_scene_csv(tmp_path / "missing.csv")
