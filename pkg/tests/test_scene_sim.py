from __future__ import annotations

import pytest

from hrm3d.depth_models import NoiseModel, OracleHead, RegressedDepthModel, RegressedHead
from hrm3d.errors import EmptyConfigRange
from hrm3d.geometry import ground_depth, project
from hrm3d.scene_sim import (
    MIN_PREDICTED_DEPTH,
    Box3D,
    SceneConfig,
    bottom_center_point,
    box_corners,
    emulate_detector,
    frame_seed,
    generate_scene,
    generate_scenes,
    observe,
    project_box,
    training_observations,
)

SINGLE = SceneConfig(boxes_per_frame=(1, 1), depth_range=(20.0, 20.0), lateral_range=(0.0, 0.0),
                     dimension_std=(0.0, 0.0, 0.0))
REGRESSOR = RegressedDepthModel.from_slope(0.1, 60.0, SINGLE.intrinsics)


class TestBox3D:
    """Tests for Box3D."""

    def test_corners_bottom_face_first(self):
        box = Box3D(x=1.0, y=0.71, z=20.0, l=4.5, w=1.9, h=1.6, yaw=0.3)
        corners = box_corners(box)
        assert corners.shape == (8, 3)
        assert corners[:4, 1] == pytest.approx([box.bottom] * 4)
        assert corners[4:, 1] == pytest.approx([0.71 - 0.8] * 4)
        assert corners.mean(axis=0) == pytest.approx([1.0, 0.71, 20.0])

    def test_axis_aligned_extent(self):
        corners = box_corners(Box3D(x=0.0, y=0.0, z=10.0, l=4.0, w=2.0, h=1.0))
        assert corners[:, 0].min() == pytest.approx(-2.0)
        assert corners[:, 2].max() == pytest.approx(11.0)

    def test_rejects_non_positive_size(self):
        with pytest.raises(ValueError):
            Box3D(x=0.0, y=0.0, z=10.0, l=0.0, w=1.0, h=1.0)
        with pytest.raises(ValueError):
            Box3D(x=0.0, y=0.0, z=-1.0, l=1.0, w=1.0, h=1.0)


class TestGeneration:
    """Tests for scene generation."""

    def test_single_box_projection(self):
        scene = generate_scene(SINGLE, seed=11)
        assert len(scene.boxes) == 1
        box = scene.boxes[0]
        assert box.z == 20.0
        assert box.bottom == pytest.approx(1.51)
        pb = observe(scene, 0.0)[0]
        assert pb.u_c == pytest.approx(800.0, abs=1e-9)
        assert pb.v_c == pytest.approx(450.0 + 1000.0 * (1.51 - 0.8) / 20.0, abs=1e-9)

    def test_empty_scene(self):
        scene = generate_scene(SINGLE.model_copy(update={"boxes_per_frame": (0, 0)}), seed=1)
        assert scene.boxes == []
        assert observe(scene, 0.76) == []

    def test_deterministic(self):
        config = SceneConfig()
        assert generate_scene(config, 7).boxes == generate_scene(config, 7).boxes
        assert [s.boxes for s in generate_scenes(config, 3, 4)] == [s.boxes for s in generate_scenes(config, 3, 4)]
        assert generate_scene(config, 7).boxes != generate_scene(config, 8).boxes

    def test_empty_range(self):
        with pytest.raises(EmptyConfigRange):
            generate_scene(SceneConfig(depth_range=(30.0, 10.0)), seed=0)
        with pytest.raises(EmptyConfigRange):
            generate_scene(SceneConfig(boxes_per_frame=(5, 2)), seed=0)

    def test_boxes_stand_on_ground(self):
        for scene in generate_scenes(SceneConfig(), 5, 10):
            for box in scene.boxes:
                assert box.bottom == pytest.approx(1.51)
                assert box_corners(box)[:, 2].min() >= 1.0
                assert 5.0 <= box.z <= 60.0

    def test_ground_depth_at_true_bottom(self):
        for scene in generate_scenes(SceneConfig(), 6, 10):
            for box in scene.boxes:
                bottom = project(bottom_center_point(box), scene.camera)
                assert ground_depth(bottom, scene.camera) == pytest.approx(box.z, rel=1e-9)

    def test_truncated_boxes_are_kept(self):
        config = SINGLE.model_copy(update={"depth_range": (6.0, 6.0), "lateral_range": (14.0, 14.0)})
        pb = observe(generate_scene(config, seed=2), 0.0)[0]
        assert pb.truncated
        assert pb.bbox2D[2] > 1600

    def test_frame_seeds_are_independent(self):
        seeds = {frame_seed(0, stream, i) for stream in ("scenes", "noise") for i in range(50)}
        assert len(seeds) == 100
        assert frame_seed(0, "noise", 3) == frame_seed(0, "noise", 3)


class TestObservation:
    """Tests for observing scenes from a camera."""

    def test_height_change_shifts_rows_only(self):
        for scene in generate_scenes(SceneConfig(), 3, 5):
            before, after = observe(scene, 0.0), observe(scene, 0.76)
            for box, a, b in zip(scene.boxes, before, after):
                assert b.u_c == pytest.approx(a.u_c, abs=1e-9)
                assert b.v_c - a.v_c == pytest.approx(1000.0 * 0.76 / box.z, abs=1e-9)

    def test_observing_at_generation_height(self):
        config = SceneConfig(delta_h=0.38)
        scene = generate_scene(config, seed=4)
        assert scene.camera.mounting_height == pytest.approx(1.89)
        assert observe(scene, 0.38) == [project_box(b, scene.camera) for b in scene.boxes]
        for box, a, b in zip(scene.boxes, observe(scene, 0.38), observe(scene, 0.0)):
            assert b.v_c - a.v_c == pytest.approx(-1000.0 * 0.38 / box.z, abs=1e-9)

    def test_boxes_follow_camera_frame(self):
        scene = generate_scene(SceneConfig(), seed=9)
        for a, b in zip(scene.boxes, scene.boxes_at(0.76)):
            assert b.y == pytest.approx(a.y + 0.76)
            assert b.z == a.z

    def test_training_observations(self):
        scenes = generate_scenes(SceneConfig(), 1, 5)
        observations = training_observations(scenes)
        assert len(observations) == sum(len(s.boxes) for s in scenes)
        for o in observations:
            assert o.delta_h == 0.0
            assert o.bottom_v > o.projected.v_c


class TestEmulator:
    """Tests for the prediction emulator."""

    def setup_method(self):
        self.config = SceneConfig(depth_range=(10.0, 60.0))
        self.scene = generate_scene(self.config, seed=21)
        self.noiseless = NoiseModel(sigma=0.0)

    def _emulate(self, head, delta_h, noise=None, seed=0, scene=None):
        scene = scene or self.scene
        return emulate_detector(scene, observe(scene, delta_h), head, noise or self.noiseless, seed,
                                delta_h=delta_h)

    def test_oracle_head_reproduces_ground_truth(self):
        ds = self._emulate(OracleHead(RegressedHead(REGRESSOR)), 0.76)
        assert len(ds.predictions) == len(ds.ground_truth)
        for p in ds.predictions:
            gt = ds.ground_truth[p.gt_index].box
            assert p.box.z == gt.z
            assert p.box.x == pytest.approx(gt.x, abs=1e-9)
            assert p.box.y == pytest.approx(gt.y, abs=1e-9)
            assert p.projected == ds.ground_truth[p.gt_index].projected

    def test_regressed_shift(self):
        ds = self._emulate(RegressedHead(REGRESSOR), 0.76)
        assert ds.predictions
        for p in ds.predictions:
            gt = ds.ground_truth[p.gt_index].box
            assert not p.clamped
            assert p.box.z - gt.z == pytest.approx(-0.1 * 1000.0 * 0.76 / gt.z, abs=1e-9)
            assert p.expected_bias == pytest.approx(p.box.z - gt.z, abs=1e-9)

    def test_zero_shift_is_unbiased(self):
        ds = self._emulate(RegressedHead(REGRESSOR), 0.0)
        for p in ds.predictions:
            assert p.box.z == ds.ground_truth[p.gt_index].box.z

    def test_near_predictions_are_floored(self):
        config = SINGLE.model_copy(update={"depth_range": (5.0, 5.0)})
        scene = generate_scene(config, seed=3)
        ds = self._emulate(RegressedHead(REGRESSOR), 0.76, scene=scene)
        (p,) = ds.predictions
        assert p.clamped
        assert p.box.z == MIN_PREDICTED_DEPTH

    def test_noise_depends_on_seed_only(self):
        noise = NoiseModel(sigma=0.5)
        head = RegressedHead(REGRESSOR)
        a = self._emulate(head, 0.0, noise, seed=1)
        b = self._emulate(head, 0.0, noise, seed=1)
        c = self._emulate(head, 0.0, noise, seed=2)
        assert [p.box for p in a.predictions] == [p.box for p in b.predictions]
        assert [p.box.z for p in a.predictions] != [p.box.z for p in c.predictions]
        assert [g.box for g in a.ground_truth] == [g.box for g in c.ground_truth]

    def test_scores_in_unit_interval(self):
        ds = self._emulate(RegressedHead(REGRESSOR), 0.38, NoiseModel(sigma=0.5), seed=4)
        assert all(0.0 <= p.box.score <= 1.0 for p in ds.predictions)
        assert ds.delta_h == 0.38
        assert ds.camera.mounting_height == pytest.approx(1.89)
