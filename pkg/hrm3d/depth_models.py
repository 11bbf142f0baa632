"""Depth estimators and their analytic extrapolation biases.

Four estimators map the image observables of a box to a depth:

- regressed: linear in the projected centre row, z = -beta (v_c - v0) + z_max
- ground: ground-plane depth queried at the estimated bottom centre
- fused: weighted average of regressed and ground (0.5 by default)
- compensated: regressed, after undoing the pixel shift of a camera height
  change under a constant-depth assumption

When the camera height changes by dH after calibration, the regressed depth
drifts by -(beta / z) f dH and the ground depth by f dH / (v_b - v0): opposite
signs, which the fused estimator averages away.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Protocol, Sequence

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import CalibrationError, ConfigInvalid, DegenerateFit, HorizonDegenerate, IoFailure
from .geometry import Camera, CameraIntrinsics, Pixel, ground_depth, ground_depth_pitched

logger = logging.getLogger(__name__)

Formulation = Literal["product", "sum"]
Anchor = Literal["appearance", "geometry"]

PARAMETERS_FORMAT_VERSION = 1


class ProjectedBox(BaseModel):
    """Image-plane observables of a 3D box.

    ``u_c, v_c`` is the projection of the 3D centre; ``bbox2D`` is
    (left, top, right, bottom). Boxes reaching outside the image keep their
    full extent and are flagged ``truncated``.
    """

    model_config = ConfigDict(frozen=True)

    u_c: float
    v_c: float
    bbox2D: tuple[float, float, float, float]
    truncated: bool = False

    @model_validator(mode="after")
    def _check_box(self) -> "ProjectedBox":
        left, top, right, bottom = self.bbox2D
        if not (left <= right and top < bottom):
            raise ValueError(f"bbox2D {self.bbox2D} is not well ordered with positive height")
        return self

    @property
    def u_c2D(self) -> float:
        return (self.bbox2D[0] + self.bbox2D[2]) / 2

    @property
    def v_c2D(self) -> float:
        return (self.bbox2D[1] + self.bbox2D[3]) / 2

    @property
    def h_2D(self) -> float:
        return self.bbox2D[3] - self.bbox2D[1]


class RegressedDepthModel(BaseModel):
    """Linear depth head z = -beta (v_c - v0) + z_max.

    It predicts ``z_max`` at the principal point row and ``z_min`` at the
    bottom image row. A least-squares fit over a wide depth range can put
    ``z_min`` below zero, so only ``beta > 0`` is enforced.
    """

    model_config = ConfigDict(frozen=True)

    beta: float = Field(gt=0)
    z_max: float
    z_min: float

    @model_validator(mode="after")
    def _check_range(self) -> "RegressedDepthModel":
        if not self.z_max > self.z_min:
            raise ValueError(f"z_max={self.z_max} must exceed z_min={self.z_min}")
        return self

    @classmethod
    def from_range(cls, z_min: float, z_max: float, intrinsics: CameraIntrinsics) -> "RegressedDepthModel":
        beta = (z_max - z_min) / (intrinsics.image_height - intrinsics.v0)
        return cls(beta=beta, z_max=z_max, z_min=z_min)

    @classmethod
    def from_slope(cls, beta: float, z_max: float, intrinsics: CameraIntrinsics) -> "RegressedDepthModel":
        return cls(beta=beta, z_max=z_max, z_min=z_max - beta * (intrinsics.image_height - intrinsics.v0))


class GroundDepthModel(BaseModel):
    """Bottom-centre ground-depth head.

    ``alpha`` is dimensionless in the product formulation and in pixels in the
    sum formulation.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = 0.0
    formulation: Formulation = "product"
    relu_guard: bool = True


class FusionModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    weight: float = Field(default=0.5, ge=0.0, le=1.0)


class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(default=0.5, ge=0.0)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(0.0, self.sigma))


# Estimators


def bottom_center(pb: ProjectedBox, model: GroundDepthModel) -> Pixel:
    """Projected bottom centre estimated from 2D observables.

    product: v_b = v_c + h_2D/2 + alpha (v_c - v_c2D)
    sum:     v_b = v_c + h_2D/2 + alpha
    """
    if model.formulation == "product":
        correction = model.alpha * (pb.v_c - pb.v_c2D)
    else:
        correction = model.alpha
    return Pixel(u=pb.u_c, v=pb.v_c + pb.h_2D / 2 + correction)


def _ground_depth_at(px: Pixel, cam: Camera, relu_guard: bool) -> float:
    if cam.pitch == 0.0:
        return ground_depth(px, cam, relu_guard=relu_guard)
    return ground_depth_pitched(px, cam, relu_guard=relu_guard)


def ground_estimate(pb: ProjectedBox, cam: Camera, model: GroundDepthModel) -> float:
    """Ground depth at the estimated bottom centre of ``pb``."""
    return _ground_depth_at(bottom_center(pb, model), cam, model.relu_guard)


def regressed_estimate(pb: ProjectedBox, model: RegressedDepthModel, intrinsics: CameraIntrinsics) -> float:
    return -model.beta * (pb.v_c - intrinsics.v0) + model.z_max


def fused_estimate(
    pb: ProjectedBox,
    cam: Camera,
    g: GroundDepthModel,
    r: RegressedDepthModel,
    fusion: FusionModel,
) -> float:
    ground = ground_estimate(pb, cam, g)
    regressed = regressed_estimate(pb, r, cam.intrinsics)
    return fusion.weight * regressed + (1.0 - fusion.weight) * ground


def compensated_estimate(
    pb: ProjectedBox,
    delta_h: float,
    z_assumed: float,
    r: RegressedDepthModel,
    cam: Camera,
) -> float:
    """Regressed depth after removing the shift f dH / z_assumed from v_c.

    ``z_assumed = inf`` leaves the regressed estimate untouched.
    """
    if not z_assumed > 0:
        raise ValueError(f"z_assumed must be positive, got {z_assumed}")
    shifted = pb.model_copy(update={"v_c": pb.v_c - cam.intrinsics.f * delta_h / z_assumed})
    return regressed_estimate(shifted, r, cam.intrinsics)


# Analytic biases


def predicted_ground_bias(v_b: float, delta_h: float, cam: Camera, delta: float = 0.0, *, relu_guard: bool = True) -> float:
    """First-order mean error of the ground model after a height change.

    relu(1 / (v_b - v0)) f dH on level ground, f dH / ((v_b - v0) cos d + f sin d)
    on ground pitched by d. Diverges (returns +-inf) where the denominator
    vanishes. Valid while dH is small relative to the object depth.
    """
    f = cam.intrinsics.f
    offset = v_b - cam.intrinsics.v0
    if delta == 0.0:
        if relu_guard and offset < 0:
            return 0.0
        denominator = offset
    else:
        denominator = offset * math.cos(delta) + f * math.sin(delta)
    if denominator == 0.0:
        return 0.0 if delta_h == 0 else math.copysign(math.inf, delta_h)
    return f * delta_h / denominator


def predicted_regress_bias(z: float, delta_h: float, beta: float, f: float) -> float:
    """Mean error -(beta / z) f dH of the linear regressor; ``z`` is the true depth."""
    if not z > 0:
        raise ValueError(f"depth must be positive, got {z}")
    return -(beta / z) * f * delta_h


def predicted_compensated_bias(z: float, delta_h: float, beta: float, f: float, z_assumed: float) -> float:
    """Residual error -beta f dH (1/z - 1/z_assumed) left after compensation."""
    if not z > 0:
        raise ValueError(f"depth must be positive, got {z}")
    return -beta * f * delta_h * (1.0 / z - 1.0 / z_assumed)


# Calibration


@dataclass(frozen=True)
class TrainingObservation:
    """One box seen at calibration time.

    Attributes:
        projected: Image observables of the box.
        depth: Ground-truth depth.
        bottom_v: Row of the true projected bottom centre.
        delta_h: Height change of the camera that observed the box.
    """

    projected: ProjectedBox
    depth: float
    bottom_v: float
    delta_h: float = 0.0


def _require_training_height(observations: Sequence[TrainingObservation]) -> None:
    shifted = {o.delta_h for o in observations if o.delta_h != 0.0}
    if shifted:
        raise CalibrationError(
            f"calibration data must come from the training height, found dH in {sorted(shifted)}"
        )


def fit_regressor(offsets: Sequence[float], depths: Sequence[float], intrinsics: CameraIntrinsics) -> RegressedDepthModel:
    """Ordinary least squares of depth on (v_c - v0)."""
    x = np.asarray(offsets, dtype=float)
    z = np.asarray(depths, dtype=float)
    if len(x) != len(z):
        raise DegenerateFit(f"{len(x)} offsets but {len(z)} depths")
    if len(np.unique(x)) < 2:
        raise DegenerateFit("need at least two distinct projected centre rows")
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, z, rcond=None)
    if not slope < 0:
        raise DegenerateFit(f"fitted depth slope {slope:.6g} is not negative")
    return RegressedDepthModel.from_slope(beta=float(-slope), z_max=float(intercept), intrinsics=intrinsics)


def calibrate_regressor(observations: Sequence[TrainingObservation], intrinsics: CameraIntrinsics) -> RegressedDepthModel:
    """Fit the linear regressor on observations made at the training height."""
    _require_training_height(observations)
    model = fit_regressor(
        [o.projected.v_c - intrinsics.v0 for o in observations],
        [o.depth for o in observations],
        intrinsics,
    )
    logger.info("calibrated regressor: beta=%.4f z_max=%.3f over %d boxes",
                model.beta, model.z_max, len(observations))
    return model


def fit_alpha(observations: Sequence[TrainingObservation], formulation: Formulation = "product") -> float:
    """One-dimensional least-squares alpha against true bottom-centre rows."""
    _require_training_height(observations)
    if not observations:
        raise DegenerateFit("no observations to fit alpha")
    residual = np.array([o.bottom_v - (o.projected.v_c + o.projected.h_2D / 2) for o in observations])
    if formulation == "sum":
        alpha = float(residual.mean())
    else:
        x = np.array([o.projected.v_c - o.projected.v_c2D for o in observations])
        sxx = float(x @ x)
        if sxx == 0.0:
            raise DegenerateFit("projected and 2D centres coincide for every box")
        alpha = float(x @ residual) / sxx
    logger.info("fitted %s alpha=%.4f over %d boxes", formulation, alpha, len(observations))
    return alpha


def fit_fusion_weight(
    observations: Sequence[TrainingObservation],
    cam: Camera,
    g: GroundDepthModel,
    r: RegressedDepthModel,
) -> FusionModel:
    """Least-squares weight of the regressed estimate, clipped to [0, 1]."""
    _require_training_height(observations)
    rows = []
    for o in observations:
        try:
            rows.append((regressed_estimate(o.projected, r, cam.intrinsics), ground_estimate(o.projected, cam, g), o.depth))
        except HorizonDegenerate:
            continue
    if not rows:
        raise DegenerateFit("no observation yields both estimates")
    reg, gnd, z = (np.array(c) for c in zip(*rows))
    spread = reg - gnd
    denom = float(spread @ spread)
    if denom == 0.0:
        raise DegenerateFit("regressed and ground estimates coincide")
    weight = float(np.clip(spread @ (z - gnd) / denom, 0.0, 1.0))
    logger.info("learned fusion weight=%.4f over %d boxes", weight, len(rows))
    return FusionModel(weight=weight)


def optimize_z_assumed(observations: Sequence[TrainingObservation]) -> float:
    """Distance parameter minimising the squared residual shift f dH (1/z - 1/z_a).

    The optimum is the harmonic mean of the training depths.
    """
    _require_training_height(observations)
    if not observations:
        raise DegenerateFit("no observations to optimise z_assumed")
    inverse = np.array([1.0 / o.depth for o in observations])
    return float(1.0 / inverse.mean())


# Parameter bundle


class ModelParameters(BaseModel):
    """Calibrated parameters of every estimator, serialised as flat YAML."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    format_version: int = PARAMETERS_FORMAT_VERSION
    beta: float = Field(gt=0)
    z_max: float
    z_min: float
    alpha: float = 0.0
    formulation: Formulation = "product"
    relu_guard: bool = True
    fusion_weight: float = Field(default=0.5, ge=0.0, le=1.0)
    learned_fusion_weight: float = Field(default=0.5, ge=0.0, le=1.0)
    sigma: float = Field(default=0.5, ge=0.0)
    z_assumed: float = Field(default=50.0, gt=0)
    z_assumed_optimized: float = Field(default=50.0, gt=0)

    @property
    def regressor(self) -> RegressedDepthModel:
        return RegressedDepthModel(beta=self.beta, z_max=self.z_max, z_min=self.z_min)

    @property
    def ground(self) -> GroundDepthModel:
        return GroundDepthModel(alpha=self.alpha, formulation=self.formulation, relu_guard=self.relu_guard)

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(sigma=self.sigma)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(), sort_keys=False)

    def save(self, path: Path) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_yaml(), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write model parameters to {path}: {exc}") from exc

    @classmethod
    def from_yaml(cls, text: str) -> "ModelParameters":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"model parameters are not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigInvalid("model parameters must be a mapping")
        version = data.get("format_version")
        if version != PARAMETERS_FORMAT_VERSION:
            raise ConfigInvalid(f"unsupported model parameter format_version {version!r}")
        try:
            return cls.model_validate(data)
        except ValueError as exc:
            raise ConfigInvalid(f"invalid model parameters: {exc}") from exc

    @classmethod
    def load(cls, path: Path) -> "ModelParameters":
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read model parameters from {path}: {exc}") from exc
        return cls.from_yaml(text)


# Depth heads used by the detector emulator


@dataclass(frozen=True)
class BoxView:
    """A box seen from the deployed camera, next to how it looked at training height."""

    observed: ProjectedBox
    reference: ProjectedBox
    camera: Camera
    reference_camera: Camera

    @property
    def delta_h(self) -> float:
        return self.camera.mounting_height - self.reference_camera.mounting_height

    def at_reference(self) -> "BoxView":
        return replace(self, observed=self.reference, camera=self.reference_camera)


class DepthHead(Protocol):
    name: str

    def estimate(self, view: BoxView) -> float: ...

    def predicted_bias(self, view: BoxView, depth: float) -> float: ...


@dataclass(frozen=True)
class RegressedHead:
    model: RegressedDepthModel
    name: str = "regressed"

    def estimate(self, view: BoxView) -> float:
        return regressed_estimate(view.observed, self.model, view.camera.intrinsics)

    def predicted_bias(self, view: BoxView, depth: float) -> float:
        return predicted_regress_bias(depth, view.delta_h, self.model.beta, view.camera.intrinsics.f)


@dataclass(frozen=True)
class GroundHead:
    """Ground-depth head.

    With the ``appearance`` anchor the bottom centre is located as it was
    learned at training height while the ground prior follows the deployed
    camera, so the error is f dH / (v_b - v0) to first order. The ``geometry``
    anchor locates it in the deployed image.
    """

    model: GroundDepthModel
    anchor: Anchor = "appearance"
    name: str = "ground"

    def _anchor_box(self, view: BoxView) -> ProjectedBox:
        return view.reference if self.anchor == "appearance" else view.observed

    def estimate(self, view: BoxView) -> float:
        return ground_estimate(self._anchor_box(view), view.camera, self.model)

    def predicted_bias(self, view: BoxView, depth: float) -> float:
        v_b = bottom_center(view.reference, self.model).v
        return predicted_ground_bias(v_b, view.delta_h, view.camera, view.camera.pitch,
                                     relu_guard=self.model.relu_guard)


@dataclass(frozen=True)
class FusedHead:
    regressed: RegressedHead
    ground: GroundHead
    fusion: FusionModel = field(default_factory=FusionModel)
    name: str = "fused"

    def estimate(self, view: BoxView) -> float:
        w = self.fusion.weight
        return w * self.regressed.estimate(view) + (1.0 - w) * self.ground.estimate(view)

    def predicted_bias(self, view: BoxView, depth: float) -> float:
        w = self.fusion.weight
        return w * self.regressed.predicted_bias(view, depth) + (1.0 - w) * self.ground.predicted_bias(view, depth)


@dataclass(frozen=True)
class CompensatedHead:
    model: RegressedDepthModel
    z_assumed: float = 50.0
    name: str = "compensated"

    def estimate(self, view: BoxView) -> float:
        return compensated_estimate(view.observed, view.delta_h, self.z_assumed, self.model, view.camera)

    def predicted_bias(self, view: BoxView, depth: float) -> float:
        return predicted_compensated_bias(depth, view.delta_h, self.model.beta,
                                          view.camera.intrinsics.f, self.z_assumed)


@dataclass(frozen=True)
class OracleHead:
    """Head trained at the deployed height: it never extrapolates."""

    inner: RegressedHead
    name: str = "oracle"

    def estimate(self, view: BoxView) -> float:
        return self.inner.estimate(view.at_reference())

    def predicted_bias(self, view: BoxView, depth: float) -> float:
        return 0.0
