"""Pinhole camera geometry: projection, backprojection and ground depth.

Coordinate conventions
======================
Camera frame (right-handed, standard computer vision):
  - x right, y down, z forward along the optical axis.

World frame:
  - Related to the camera by X_cam = R X_world + T.
  - y points downward, toward the ground. Level ground is the plane
    r . n = offset with n = (0, 1, 0).

Image frame:
  - Origin top-left, u right, v down, pixels.

A camera raised by dH meters sees every world point dH meters lower, so its
pixel moves down by f dH / z while the depth z stays the same.

All angles are radians, lengths meters and image coordinates pixels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BehindCamera,
    HorizonDegenerate,
    MissingDepth,
    NonIdentityRotation,
    NotASimplex,
)

logger = logging.getLogger(__name__)

# Rays whose ground-normal component is below this are parallel to the ground.
DENOMINATOR_TOLERANCE = 1e-12
ORTHONORMAL_TOLERANCE = 1e-9
UNIT_NORMAL_TOLERANCE = 1e-12
SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal length and principal point of a pinhole camera.

    Attributes:
        f: Focal length in pixels.
        u0: Principal point column.
        v0: Principal point row.
        image_width: Image width in pixels.
        image_height: Image height ``h`` in pixels.
    """

    f: float
    u0: float
    v0: float
    image_width: int
    image_height: int

    def __post_init__(self) -> None:
        if not self.f > 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        if not 0 < self.u0 < self.image_width:
            raise ValueError(f"u0={self.u0} outside (0, {self.image_width})")
        if not 0 < self.v0 < self.image_height:
            raise ValueError(f"v0={self.v0} outside (0, {self.image_height})")

    @classmethod
    def centered(cls, f: float, image_width: int, image_height: int) -> "CameraIntrinsics":
        """Intrinsics with the principal point at the image centre."""
        return cls(f=f, u0=image_width / 2, v0=image_height / 2,
                   image_width=image_width, image_height=image_height)

    @property
    def K(self) -> np.ndarray:
        return np.array([
            [self.f, 0.0, self.u0],
            [0.0, self.f, self.v0],
            [0.0, 0.0, 1.0],
        ])


@dataclass(frozen=True)
class CameraExtrinsics:
    """Pose of the camera with respect to the world frame.

    Attributes:
        rotation: 3x3 orthonormal matrix R.
        translation: 3-vector T in meters.
        mounting_height: Height of the optical centre above the ground.
        pitch: Ground pitch delta used by the pitched ground-depth model.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mounting_height: float = 1.51
    pitch: float = 0.0

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=float)
        T = np.asarray(self.translation, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {R.shape}")
        if not np.allclose(R.T @ R, np.eye(3), atol=ORTHONORMAL_TOLERANCE, rtol=0.0):
            raise ValueError("rotation is not orthonormal")
        if not self.mounting_height > 0:
            raise ValueError(f"mounting height must be positive, got {self.mounting_height}")
        if not -math.pi / 2 < self.pitch <= math.pi / 2:
            raise ValueError(f"pitch {self.pitch} outside (-pi/2, pi/2]")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @property
    def is_identity_rotation(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)))


@dataclass(frozen=True)
class GroundPlane:
    """Plane r . normal = offset in world coordinates."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > UNIT_NORMAL_TOLERANCE:
            raise ValueError(f"ground normal must be unit length, got |n|={np.linalg.norm(n)}")
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True)
class RayCoefficients:
    """A = R^-1 K^-1 and B = -R^-1 T: a pixel (u, v) at depth z lies at A p z + B."""

    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class Pixel:
    u: float
    v: float
    z: float | None = None

    def __post_init__(self) -> None:
        if self.z is not None and not self.z > 0:
            raise MissingDepth(f"pixel depth must be positive, got {self.z}")

    def homogeneous(self) -> np.ndarray:
        return np.array([self.u, self.v, 1.0])


@dataclass(frozen=True)
class Point3D:
    X: float
    Y: float
    Z: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.X, self.Y, self.Z)):
            raise ValueError(f"point coordinates must be finite, got {self.as_array()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.Z], dtype=float)


@dataclass(frozen=True)
class Camera:
    """Intrinsics and extrinsics of one camera."""

    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics = field(default_factory=CameraExtrinsics)

    @property
    def K(self) -> np.ndarray:
        return self.intrinsics.K

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.intrinsics.K)

    @property
    def mounting_height(self) -> float:
        return self.extrinsics.mounting_height

    @property
    def pitch(self) -> float:
        return self.extrinsics.pitch

    def ray_coefficients(self) -> RayCoefficients:
        R_inv = self.extrinsics.rotation.T
        return RayCoefficients(A=R_inv @ self.K_inv, B=-R_inv @ self.extrinsics.translation)

    @property
    def center(self) -> np.ndarray:
        """Optical centre in world coordinates (equal to B)."""
        return -self.extrinsics.rotation.T @ self.extrinsics.translation

    @property
    def ground_offset(self) -> float:
        """World y of the level ground, ``mounting_height`` below the optical centre."""
        return self.mounting_height + float(self.center[1])

    def default_ground(self) -> GroundPlane:
        return GroundPlane(normal=np.array([0.0, 1.0, 0.0]), offset=self.ground_offset)


def camera_at_height(intrinsics: CameraIntrinsics, mounting_height: float, pitch: float = 0.0) -> Camera:
    """Level camera centred at the world origin (R = I, T = 0)."""
    return Camera(intrinsics, CameraExtrinsics(mounting_height=mounting_height, pitch=pitch))


def raise_camera(cam: Camera, delta_h: float) -> Camera:
    """Translate the camera vertically by ``delta_h`` meters (up is positive).

    Rotation and pitch are unchanged; the ground plane stays where it was.
    """
    ext = cam.extrinsics
    lifted = ext.translation + ext.rotation @ np.array([0.0, delta_h, 0.0])
    return Camera(
        cam.intrinsics,
        CameraExtrinsics(
            rotation=ext.rotation,
            translation=lifted,
            mounting_height=ext.mounting_height + delta_h,
            pitch=ext.pitch,
        ),
    )


def project(p: Point3D, cam: Camera) -> Pixel:
    """Project a world point to a pixel with its camera depth."""
    x_cam = cam.extrinsics.rotation @ p.as_array() + cam.extrinsics.translation
    z = float(x_cam[2])
    if z <= 0:
        raise BehindCamera(f"point {p.as_array().tolist()} has camera depth {z:.6g}")
    uvw = cam.K @ x_cam
    return Pixel(u=float(uvw[0] / z), v=float(uvw[1] / z), z=z)


def backproject(px: Pixel, cam: Camera) -> Point3D:
    """World point at depth ``px.z`` along the viewing ray of ``px``."""
    if px.z is None:
        raise MissingDepth(f"pixel ({px.u}, {px.v}) has no depth")
    rc = cam.ray_coefficients()
    r = rc.A @ px.homogeneous() * px.z + rc.B
    return Point3D(float(r[0]), float(r[1]), float(r[2]))


def project_points(points: np.ndarray, cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``project``: (N, 3) world points to (N, 2) pixels and (N,) depths."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    x_cam = pts @ cam.extrinsics.rotation.T + cam.extrinsics.translation
    depth = x_cam[:, 2]
    if np.any(depth <= 0):
        raise BehindCamera(f"{int(np.sum(depth <= 0))} point(s) behind the camera")
    uvw = x_cam @ cam.K.T
    return uvw[:, :2] / depth[:, None], depth


def backproject_pixels(uv: np.ndarray, depth: np.ndarray, cam: Camera) -> np.ndarray:
    """Vectorised ``backproject``: (N, 2) pixels with (N,) depths to world points."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    depth = np.asarray(depth, dtype=float).reshape(-1)
    if np.any(depth <= 0):
        raise MissingDepth("backprojection needs positive depths")
    rc = cam.ray_coefficients()
    homog = np.column_stack([uv, np.ones(len(uv))])
    return (homog @ rc.A.T) * depth[:, None] + rc.B


def _intersect_ground(
    px: Pixel, cam: Camera, normal: np.ndarray, offset: float, relu_guard: bool
) -> float:
    rc = cam.ray_coefficients()
    numerator = offset - float(rc.B @ normal)
    denominator = float((rc.A @ px.homogeneous()) @ normal)
    if relu_guard:
        numerator = max(numerator, 0.0)
        denominator = max(denominator, 0.0)
    if abs(denominator) < DENOMINATOR_TOLERANCE:
        raise HorizonDegenerate(
            f"ray through pixel ({px.u:.3f}, {px.v:.3f}) does not meet the ground "
            f"(denominator {denominator:.3g})"
        )
    return numerator / denominator


def ground_depth(
    px: Pixel,
    cam: Camera,
    plane: GroundPlane | None = None,
    *,
    relu_guard: bool = True,
) -> float:
    """Depth at which the ray through ``px`` meets the ground plane.

    z = (offset - B . n) / ((A p) . n), which for level ground reads
    (H - b2) / (a21 u + a22 v + a23).

    With ``relu_guard`` the numerator and the ray's ground component are both
    rectified, so pixels at or above the horizon raise ``HorizonDegenerate``.
    Without it the raw, possibly negative, value is returned.
    """
    plane = plane or cam.default_ground()
    return _intersect_ground(px, cam, plane.normal, plane.offset, relu_guard)


def pitch_rotation(pitch: float) -> np.ndarray:
    """Rotation by ``pitch`` radians about the camera x-axis."""
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def ground_normal(pitch: float) -> np.ndarray:
    """Normal (0, cos d, sin d) of ground pitched by ``pitch`` radians: the rotated y-axis."""
    return pitch_rotation(pitch)[:, 1].copy()


def ground_depth_pitched(
    px: Pixel,
    cam: Camera,
    pitch: float | None = None,
    *,
    relu_guard: bool = True,
) -> float:
    """Ground depth when the camera is pitched by ``pitch`` relative to the road.

    z = (H - b2 cos d - b3 sin d) / ((a21 u + a22 v + a23) cos d + (a31 u + a32 v + a33) sin d)
    with H the level ground offset. Reduces to ``ground_depth`` at d = 0.
    """
    delta = cam.pitch if pitch is None else pitch
    if not -math.pi / 2 < delta <= math.pi / 2:
        raise ValueError(f"pitch {delta} outside (-pi/2, pi/2]")
    return _intersect_ground(px, cam, ground_normal(delta), cam.ground_offset, relu_guard)


def mixture_slope(probs: Sequence[float], taus: Sequence[float]) -> float:
    """Road slope as the probability-weighted combination of discrete slopes."""
    p = np.asarray(probs, dtype=float)
    t = np.asarray(taus, dtype=float)
    if p.shape != t.shape or p.ndim != 1 or len(p) == 0:
        raise NotASimplex(f"need matching 1-D probs and taus, got {p.shape} and {t.shape}")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > SIMPLEX_TOLERANCE:
        raise NotASimplex(f"probabilities {p.tolist()} are not a simplex")
    return float(p @ t)


def pixel_shift(px: Pixel, delta_h: float, cam: Camera) -> Pixel:
    """Pixel of the same world point after raising an unrotated camera by ``delta_h``.

    (u, v, z) -> (u, v + f dH / z, z). For rotated cameras compose
    ``backproject``, ``raise_camera`` and ``project`` instead.
    """
    if px.z is None:
        raise MissingDepth(f"pixel ({px.u}, {px.v}) has no depth")
    if not cam.extrinsics.is_identity_rotation:
        raise NonIdentityRotation("closed-form pixel shift needs R = I")
    return Pixel(px.u, px.v + cam.intrinsics.f * delta_h / px.z, px.z)


def slope_valid_interval(v_b: float, intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Slopes (open lower, closed upper) for which the ground trend keeps its sign."""
    return (-math.atan((v_b - intrinsics.v0) / intrinsics.f), math.pi / 2)
