"""hrm3d: camera-height robust monocular 3D detection toolkit.

This package provides the geometry and evaluation machinery to study how
monocular 3D detectors extrapolate when the camera is mounted higher or lower
than during training.

Main features:
- Pinhole projection, backprojection and closed-form ground-plane depth
- Regressed, ground-based, fused and compensated depth estimators with their
  analytic extrapolation biases
- Seeded synthetic driving scenes and an emulated detector
- AP3D, signed mean depth error and oracle parameter substitution
- Height sweeps with trend fitting and automatic theorem checks

Usage:
    from hrm3d import SweepConfig, run_sweep, verify_theorems

    report = run_sweep(SweepConfig(frames=50, seed=3))
    outcome = verify_theorems(report)
    print(report.models["fused"].slope, outcome.passed)

    # Or from the shell
    #   hrm3d sweep --out runs/sweep
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    BehindCamera,
    CalibrationError,
    ConfigInvalid,
    DegenerateFit,
    EmptyConfigRange,
    FrameMismatch,
    HorizonDegenerate,
    Hrm3dError,
    IoFailure,
    LabelFormatError,
    MissingDepth,
    NoMatches,
    NonIdentityRotation,
    NotASimplex,
    UnknownMask,
)
from .geometry import (
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    GroundPlane,
    Pixel,
    Point3D,
    RayCoefficients,
    backproject,
    camera_at_height,
    ground_depth,
    ground_depth_pitched,
    mixture_slope,
    pitch_rotation,
    pixel_shift,
    project,
    raise_camera,
    slope_valid_interval,
)
from .depth_models import (
    FusionModel,
    GroundDepthModel,
    ModelParameters,
    NoiseModel,
    ProjectedBox,
    RegressedDepthModel,
    bottom_center,
    calibrate_regressor,
    compensated_estimate,
    fused_estimate,
    ground_estimate,
    predicted_ground_bias,
    predicted_regress_bias,
    regressed_estimate,
)
from .scene_sim import Box3D, Detection, DetectionSet, Scene, SceneConfig, emulate_detector, generate_scene, observe
from .evaluation import (
    EvalResult,
    MatchResult,
    OracleSpec,
    average_precision,
    evaluate,
    iou2d,
    iou3d,
    mean_depth_error,
    oracle_substitute,
)
from .trend import SweepConfig, TrendReport, VerificationOutcome, oracle_breakdown, run_sweep, verify_theorems
from .formats import KittiLabelLine
from .config import RunConfig, build_config

__all__ = [
    "__version__",
    # Errors
    "Hrm3dError", "BehindCamera", "MissingDepth", "HorizonDegenerate", "NotASimplex",
    "NonIdentityRotation", "DegenerateFit", "CalibrationError", "EmptyConfigRange",
    "NoMatches", "ConfigInvalid", "FrameMismatch", "UnknownMask", "LabelFormatError", "IoFailure",
    # Geometry
    "Camera", "CameraIntrinsics", "CameraExtrinsics", "GroundPlane", "RayCoefficients",
    "Pixel", "Point3D", "project", "backproject", "ground_depth", "ground_depth_pitched",
    "mixture_slope", "pitch_rotation", "pixel_shift", "raise_camera", "camera_at_height", "slope_valid_interval",
    # Depth models
    "ProjectedBox", "RegressedDepthModel", "GroundDepthModel", "FusionModel", "NoiseModel",
    "ModelParameters", "bottom_center", "ground_estimate", "regressed_estimate", "fused_estimate",
    "compensated_estimate", "predicted_ground_bias", "predicted_regress_bias", "calibrate_regressor",
    # Scenes
    "Box3D", "Scene", "SceneConfig", "Detection", "DetectionSet",
    "generate_scene", "observe", "emulate_detector",
    # Evaluation
    "MatchResult", "EvalResult", "OracleSpec", "iou2d", "iou3d", "average_precision",
    "mean_depth_error", "oracle_substitute", "evaluate",
    # Trends
    "SweepConfig", "TrendReport", "VerificationOutcome", "run_sweep", "verify_theorems", "oracle_breakdown",
    # Interchange and configuration
    "KittiLabelLine", "RunConfig", "build_config",
]
