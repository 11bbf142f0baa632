"""Exception hierarchy for hrm3d.

Every error derives from ``Hrm3dError``, itself a ``ValueError``: all of them
describe inputs the library cannot work with.
"""

from __future__ import annotations


class Hrm3dError(ValueError):
    """Base class for all hrm3d errors."""


class BehindCamera(Hrm3dError):
    """A point has non-positive depth after the extrinsic transform."""


class MissingDepth(Hrm3dError):
    """A pixel needs a positive depth for this operation."""


class HorizonDegenerate(Hrm3dError):
    """A viewing ray is parallel to the ground or points away from it."""


class NotASimplex(Hrm3dError):
    """Mixture probabilities are negative or do not sum to one."""


class NonIdentityRotation(Hrm3dError):
    """The closed-form pixel shift only holds for an unrotated camera."""


class DegenerateFit(Hrm3dError):
    """A least-squares calibration has no unique or no valid solution."""


class CalibrationError(Hrm3dError):
    """Calibration data was not observed at the training height."""


class EmptyConfigRange(Hrm3dError):
    """A scene configuration range cannot produce any sample."""


class NoMatches(Hrm3dError):
    """No prediction matched a ground-truth box, so MDE is undefined."""


class ConfigInvalid(Hrm3dError):
    """A run configuration failed to parse or validate."""


class FrameMismatch(Hrm3dError):
    """Ground-truth and prediction directories hold different frame ids."""

    def __init__(self, missing_pred: list[str], missing_gt: list[str]):
        self.missing_pred = missing_pred
        self.missing_gt = missing_gt
        parts = []
        if missing_pred:
            parts.append(f"no predictions for frames {', '.join(missing_pred)}")
        if missing_gt:
            parts.append(f"no ground truth for frames {', '.join(missing_gt)}")
        super().__init__("; ".join(parts) or "frame ids differ")


class UnknownMask(Hrm3dError):
    """An oracle mask names a parameter outside x, y, z, l, w, h, theta."""

    def __init__(self, token: str, mask: str):
        self.token = token
        self.mask = mask
        super().__init__(f"unknown oracle parameter {token!r} in mask {mask!r}")


class LabelFormatError(Hrm3dError):
    """A KITTI label line is malformed."""


class IoFailure(Hrm3dError):
    """Reading or writing an artifact on disk failed."""
