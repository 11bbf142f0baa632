"""Seeded synthetic driving scenes on flat ground.

A scene is generated in the frame of a level camera mounted ``base_height +
delta_h`` above the road: the camera sits at the origin, the ground is the
plane y = mounting height and every box stands on it. Re-observing the scene
from another height only translates the camera vertically; object depths do
not change.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .depth_models import BoxView, DepthHead, NoiseModel, ProjectedBox, TrainingObservation
from .errors import EmptyConfigRange, HorizonDegenerate
from .geometry import (
    Camera,
    CameraIntrinsics,
    Pixel,
    Point3D,
    backproject,
    camera_at_height,
    project,
    project_points,
    raise_camera,
)

logger = logging.getLogger(__name__)

# Depth heads emit strictly positive depths; emulated predictions are floored here.
MIN_PREDICTED_DEPTH = 0.5


class Box3D(BaseModel):
    """Oriented cuboid in a camera frame.

    ``(x, y, z)`` is the geometric centre, ``yaw`` the rotation about the
    camera y-axis (KITTI ``rotation_y``) and ``l`` runs along the heading.
    """

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    z: float = Field(gt=0)
    l: float = Field(gt=0)
    w: float = Field(gt=0)
    h: float = Field(gt=0)
    yaw: float = 0.0
    label: str = "Car"
    score: float = Field(default=1.0, ge=0.0, le=1.0)

    @property
    def bottom(self) -> float:
        """y of the bottom face (y grows downward)."""
        return self.y + self.h / 2

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def box_corners(box: Box3D) -> np.ndarray:
    """Eight corners, bottom face first, as an (8, 3) array."""
    dx = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * box.l / 2
    dz = np.array([1, -1, -1, 1, 1, -1, -1, 1]) * box.w / 2
    dy = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * box.h / 2
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    return np.column_stack([
        box.x + c * dx + s * dz,
        box.y + dy,
        box.z - s * dx + c * dz,
    ])


def bottom_center_point(box: Box3D) -> Point3D:
    return Point3D(box.x, box.bottom, box.z)


def project_box(box: Box3D, cam: Camera) -> ProjectedBox:
    """Projected centre plus the image extent of the eight corners."""
    center = project(Point3D(box.x, box.y, box.z), cam)
    uv, _ = project_points(box_corners(box), cam)
    left, top = uv.min(axis=0)
    right, bottom = uv.max(axis=0)
    intr = cam.intrinsics
    truncated = bool(left < 0 or top < 0 or right > intr.image_width or bottom > intr.image_height)
    return ProjectedBox(
        u_c=center.u,
        v_c=center.v,
        bbox2D=(float(left), float(top), float(right), float(bottom)),
        truncated=truncated,
    )


class SceneConfig(BaseModel):
    """Scene distribution and camera. Ranges are inclusive (low, high) pairs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    image_width: int = Field(default=1600, gt=0)
    image_height: int = Field(default=900, gt=0)
    focal_length: float = Field(default=1000.0, gt=0)
    base_height: float = Field(default=1.51, gt=0)
    delta_h: float = 0.0
    boxes_per_frame: tuple[int, int] = (1, 12)
    depth_range: tuple[float, float] = (5.0, 60.0)
    lateral_range: tuple[float, float] = (-15.0, 15.0)
    dimension_mean: tuple[float, float, float] = (4.5, 1.9, 1.6)
    dimension_std: tuple[float, float, float] = (0.25, 0.1, 0.1)
    min_dimension: float = Field(default=0.1, gt=0)
    min_corner_depth: float = Field(default=1.0, gt=0)
    label: str = "Car"
    max_attempts: int = Field(default=100, gt=0)

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.centered(self.focal_length, self.image_width, self.image_height)

    def camera(self) -> Camera:
        return camera_at_height(self.intrinsics, self.base_height + self.delta_h)


@dataclass(frozen=True)
class Scene:
    camera: Camera
    delta_h: float
    boxes: list[Box3D]
    seed: int
    base_height: float = 1.51

    def camera_at(self, delta_h: float) -> Camera:
        """This scene's world frame seen by a camera at height change ``delta_h``."""
        return raise_camera(self.camera, delta_h - self.delta_h)

    def centered_camera(self, delta_h: float) -> Camera:
        """Level camera at the origin of its own frame, at height change ``delta_h``."""
        return camera_at_height(self.camera.intrinsics, self.base_height + delta_h)

    def boxes_at(self, delta_h: float) -> list[Box3D]:
        """Boxes expressed in the frame of ``centered_camera(delta_h)``."""
        shift = delta_h - self.delta_h
        if shift == 0.0:
            return list(self.boxes)
        return [b.model_copy(update={"y": b.y + shift}) for b in self.boxes]


def frame_seed(master_seed: int, stream: str, frame: int) -> int:
    """Independent 32-bit seed for one frame of one named random stream."""
    seq = np.random.SeedSequence([master_seed, zlib.crc32(stream.encode("utf-8")), frame])
    return int(seq.generate_state(1)[0])


def _check_ranges(config: SceneConfig) -> None:
    checks = {
        "boxes_per_frame": config.boxes_per_frame,
        "depth_range": config.depth_range,
        "lateral_range": config.lateral_range,
    }
    for name, (low, high) in checks.items():
        if low > high:
            raise EmptyConfigRange(f"{name} is empty: low {low} > high {high}")
    if config.boxes_per_frame[0] < 0:
        raise EmptyConfigRange(f"boxes_per_frame cannot be negative: {config.boxes_per_frame}")
    if config.depth_range[1] <= 0:
        raise EmptyConfigRange(f"depth_range {config.depth_range} has no positive depth")


def _sample_box(rng: np.random.Generator, config: SceneConfig, mounting_height: float) -> Box3D:
    mean = np.array(config.dimension_mean)
    std = np.array(config.dimension_std)
    for _ in range(config.max_attempts):
        z = float(rng.uniform(*config.depth_range))
        x = float(rng.uniform(*config.lateral_range))
        l, w, h = np.maximum(rng.normal(mean, std), config.min_dimension)
        yaw = float(rng.uniform(-math.pi, math.pi))
        if z <= 0:
            continue
        box = Box3D(x=x, y=mounting_height - float(h) / 2, z=z, l=float(l), w=float(w), h=float(h),
                    yaw=yaw, label=config.label)
        if box_corners(box)[:, 2].min() >= config.min_corner_depth:
            return box
    raise EmptyConfigRange(
        f"no box with all corners beyond {config.min_corner_depth} m after {config.max_attempts} attempts"
    )


def generate_scene(config: SceneConfig, seed: int) -> Scene:
    """Ground-supported boxes seen at ``config.delta_h``; a pure function of (config, seed)."""
    _check_ranges(config)
    rng = np.random.default_rng(seed)
    camera = config.camera()
    count = int(rng.integers(config.boxes_per_frame[0], config.boxes_per_frame[1] + 1))
    boxes = [_sample_box(rng, config, camera.mounting_height) for _ in range(count)]
    return Scene(camera=camera, delta_h=config.delta_h, boxes=boxes, seed=seed, base_height=config.base_height)


def generate_scenes(config: SceneConfig, master_seed: int, count: int, stream: str = "scenes") -> list[Scene]:
    return [generate_scene(config, frame_seed(master_seed, stream, i)) for i in range(count)]


def observe(scene: Scene, delta_h: float) -> list[ProjectedBox]:
    """Projected observables of every box from a camera at height change ``delta_h``."""
    cam = scene.camera_at(delta_h)
    return [project_box(box, cam) for box in scene.boxes]


def training_observations(scenes: list[Scene]) -> list[TrainingObservation]:
    """Calibration samples: every box as seen at its scene's generation height."""
    samples = []
    for scene in scenes:
        for box, pb in zip(scene.boxes, observe(scene, scene.delta_h)):
            bottom = project(bottom_center_point(box), scene.camera)
            samples.append(TrainingObservation(projected=pb, depth=box.z, bottom_v=bottom.v,
                                               delta_h=scene.delta_h))
    return samples


@dataclass(frozen=True)
class Detection:
    """A 3D box with its 2D observables.

    ``gt_index`` names the ground-truth box a prediction was emulated from and
    ``expected_bias`` its analytic depth bias; both are empty for loaded labels.
    """

    box: Box3D
    projected: ProjectedBox
    gt_index: int | None = None
    expected_bias: float | None = None
    clamped: bool = False


@dataclass
class DetectionSet:
    frame_id: str
    delta_h: float
    predictions: list[Detection] = field(default_factory=list)
    ground_truth: list[Detection] = field(default_factory=list)
    camera: Camera | None = None


def ground_truth_detections(scene: Scene, delta_h: float, observed: list[ProjectedBox] | None = None) -> list[Detection]:
    observed = observed if observed is not None else observe(scene, delta_h)
    return [Detection(box=box, projected=pb, gt_index=i)
            for i, (box, pb) in enumerate(zip(scene.boxes_at(delta_h), observed))]


def emulate_detector(
    scene: Scene,
    observed: list[ProjectedBox],
    head: DepthHead,
    noise: NoiseModel,
    seed: int,
    *,
    delta_h: float,
    reference: list[ProjectedBox] | None = None,
    frame_id: str = "000000",
    min_depth: float = MIN_PREDICTED_DEPTH,
) -> DetectionSet:
    """Emulated detections whose only error source is depth.

    Each prediction copies its ground-truth box and 2D box, then moves to depth
    z + eta + [head(dH) - head(0)]: unbiased at training height plus the
    head's own extrapolation residual. x and y follow from backprojecting the
    projected centre at that depth. Depths below ``min_depth`` are floored
    there and the prediction is flagged ``clamped``.
    """
    reference = reference if reference is not None else observe(scene, 0.0)
    camera = scene.centered_camera(delta_h)
    reference_camera = scene.centered_camera(0.0)
    ground_truth = ground_truth_detections(scene, delta_h, observed)
    rng = np.random.default_rng(seed)

    predictions = []
    for gt, ref in zip(ground_truth, reference):
        eta = noise.sample(rng)
        score = float(rng.uniform())
        view = BoxView(observed=gt.projected, reference=ref, camera=camera, reference_camera=reference_camera)
        try:
            shift = head.estimate(view) - head.estimate(view.at_reference())
        except HorizonDegenerate as exc:
            logger.debug("frame %s box %d skipped: %s", frame_id, gt.gt_index, exc)
            continue
        depth = gt.box.z + eta + shift
        clamped = not depth >= min_depth
        if clamped:
            logger.debug("frame %s box %d: predicted depth %.3f floored at %.2f",
                         frame_id, gt.gt_index, depth, min_depth)
            depth = min_depth
        center = backproject(Pixel(gt.projected.u_c, gt.projected.v_c, depth), camera)
        box = gt.box.model_copy(update={"x": center.X, "y": center.Y, "z": center.Z, "score": score})
        predictions.append(Detection(box=box, projected=gt.projected, gt_index=gt.gt_index,
                                     expected_bias=head.predicted_bias(view, gt.box.z), clamped=clamped))
    return DetectionSet(frame_id=frame_id, delta_h=delta_h, predictions=predictions,
                        ground_truth=ground_truth, camera=camera)
