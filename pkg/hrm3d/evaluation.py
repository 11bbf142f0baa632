"""Detection metrics: IoU, AP3D, signed mean depth error and oracle substitution."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from shapely.geometry import Polygon

from .errors import NoMatches, UnknownMask
from .scene_sim import Box3D, Detection, DetectionSet, box_corners

logger = logging.getLogger(__name__)

Metric = Literal["iou2d", "iou3d"]
Association = Literal["distance", "image"]

MDE_IOU2D_THRESHOLD = 0.7
ORACLE_DISTANCE_GATE = 4.0
ORACLE_PARAMETERS = ("x", "y", "z", "l", "w", "h", "yaw")


def iou2d(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two (left, top, right, bottom) boxes."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def bev_polygon(box: Box3D) -> Polygon:
    """Footprint of the box in the x-z plane."""
    return Polygon(box_corners(box)[:4, [0, 2]])


def iou3d(a: Box3D, b: Box3D) -> float:
    """Rotated 3D IoU: footprint intersection times vertical overlap, over the union volume."""
    reach = math.hypot(a.l, a.w) / 2 + math.hypot(b.l, b.w) / 2
    if math.hypot(a.x - b.x, a.z - b.z) >= reach:
        return 0.0
    y_overlap = min(a.bottom, b.bottom) - max(a.y - a.h / 2, b.y - b.h / 2)
    if y_overlap <= 0:
        return 0.0
    area = bev_polygon(a).intersection(bev_polygon(b)).area
    inter = area * y_overlap
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0


def center_distance(a: Box3D, b: Box3D) -> float:
    return float(np.linalg.norm(a.center() - b.center()))


@dataclass(frozen=True)
class MatchPair:
    pred_index: int
    gt_index: int
    iou2d: float
    iou3d: float
    distance: float


@dataclass
class MatchResult:
    """Greedy one-to-one assignment; pairs follow descending prediction score."""

    pairs: list[MatchPair] = field(default_factory=list)
    unmatched_predictions: list[int] = field(default_factory=list)
    unmatched_ground_truth: list[int] = field(default_factory=list)


def _overlaps(ds: DetectionSet, metric: Metric) -> np.ndarray:
    m = np.zeros((len(ds.predictions), len(ds.ground_truth)))
    for i, p in enumerate(ds.predictions):
        for j, g in enumerate(ds.ground_truth):
            if metric == "iou2d":
                m[i, j] = iou2d(p.projected.bbox2D, g.projected.bbox2D)
            else:
                m[i, j] = iou3d(p.box, g.box)
    return m


def _score_order(ds: DetectionSet) -> list[int]:
    return sorted(range(len(ds.predictions)), key=lambda i: -ds.predictions[i].box.score)


def _greedy(ds: DetectionSet, overlaps: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    taken: set[int] = set()
    pairs = []
    for i in _score_order(ds):
        best, best_overlap = None, threshold
        for j in range(len(ds.ground_truth)):
            if j not in taken and overlaps[i, j] > best_overlap:
                best, best_overlap = j, overlaps[i, j]
        if best is not None:
            taken.add(best)
            pairs.append((i, best))
    return pairs


def match_detections(ds: DetectionSet, metric: Metric = "iou3d", threshold: float = 0.7) -> MatchResult:
    """Descending-score greedy matching; each prediction takes the best free GT above ``threshold``."""
    overlaps = _overlaps(ds, metric)
    pairs = _greedy(ds, overlaps, threshold)
    result = MatchResult()
    for i, j in pairs:
        p, g = ds.predictions[i].box, ds.ground_truth[j].box
        result.pairs.append(MatchPair(
            pred_index=i,
            gt_index=j,
            iou2d=iou2d(ds.predictions[i].projected.bbox2D, ds.ground_truth[j].projected.bbox2D),
            iou3d=iou3d(p, g),
            distance=center_distance(p, g),
        ))
    matched_pred = {i for i, _ in pairs}
    matched_gt = {j for _, j in pairs}
    result.unmatched_predictions = [i for i in range(len(ds.predictions)) if i not in matched_pred]
    result.unmatched_ground_truth = [j for j in range(len(ds.ground_truth)) if j not in matched_gt]
    return result


def _recall_thresholds(recall_points: int) -> np.ndarray:
    if recall_points == 11:
        return np.arange(0, 11) / 10
    if recall_points < 1:
        raise ValueError(f"recall_points must be positive, got {recall_points}")
    return np.arange(1, recall_points + 1) / recall_points


def _interpolated_ap(scores: list[float], hits: list[bool], n_gt: int, recall_points: int) -> float:
    if n_gt == 0 or not scores:
        return 0.0
    order = np.argsort(-np.asarray(scores), kind="stable")
    tp = np.cumsum(np.asarray(hits, dtype=float)[order])
    fp = np.cumsum(1.0 - np.asarray(hits, dtype=float)[order])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    total = 0.0
    thresholds = _recall_thresholds(recall_points)
    for r in thresholds:
        reachable = precision[recall >= r]
        total += float(reachable.max()) if len(reachable) else 0.0
    return 100.0 * total / len(thresholds)


def _ap_from_overlaps(
    frames: Sequence[DetectionSet], overlaps: Sequence[np.ndarray], threshold: float, recall_points: int
) -> float:
    scores: list[float] = []
    hits: list[bool] = []
    n_gt = 0
    for ds, m in zip(frames, overlaps):
        n_gt += len(ds.ground_truth)
        matched = {i for i, _ in _greedy(ds, m, threshold)}
        for i, p in enumerate(ds.predictions):
            scores.append(p.box.score)
            hits.append(i in matched)
    return _interpolated_ap(scores, hits, n_gt, recall_points)


def average_precision(frames: Sequence[DetectionSet], iou_threshold: float, recall_points: int = 40) -> float:
    """Interpolated AP3D in percent.

    ``recall_points=40`` samples recall at 1/40 .. 1; ``recall_points=11``
    uses the older 0, 0.1 .. 1 grid.
    """
    overlaps = [_overlaps(ds, "iou3d") for ds in frames]
    return _ap_from_overlaps(frames, overlaps, iou_threshold, recall_points)


def depth_error_pairs(frames: Sequence[DetectionSet]) -> list[tuple[Detection, Detection]]:
    """Prediction / GT pairs whose 2D boxes overlap by more than IoU 0.7."""
    pairs = []
    for ds in frames:
        for i, j in _greedy(ds, _overlaps(ds, "iou2d"), MDE_IOU2D_THRESHOLD):
            pairs.append((ds.predictions[i], ds.ground_truth[j]))
    return pairs


def mean_depth_error(frames: Sequence[DetectionSet]) -> float:
    """Signed mean of predicted minus true depth over matched boxes."""
    pairs = depth_error_pairs(frames)
    if not pairs:
        raise NoMatches("no prediction overlaps a ground-truth box by IoU2D > 0.7")
    return float(np.mean([p.box.z - g.box.z for p, g in pairs]))


class EvalResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta_h: float = 0.0
    ap3d_70: float = Field(ge=0.0, le=100.0)
    ap3d_50: float = Field(ge=0.0, le=100.0)
    mde: float | None = None
    matched: int = 0
    missed: int = 0
    frames: int = 0


def evaluate(frames: Sequence[DetectionSet], delta_h: float | None = None, recall_points: int = 40) -> EvalResult:
    """AP3D at 0.7 and 0.5 plus MDE; ``mde`` is None when nothing matched."""
    frames = list(frames)
    overlaps = [_overlaps(ds, "iou3d") for ds in frames]
    pairs = depth_error_pairs(frames)
    n_gt = sum(len(ds.ground_truth) for ds in frames)
    if delta_h is None:
        delta_h = frames[0].delta_h if frames else 0.0
    return EvalResult(
        delta_h=delta_h,
        ap3d_70=_ap_from_overlaps(frames, overlaps, 0.7, recall_points),
        ap3d_50=_ap_from_overlaps(frames, overlaps, 0.5, recall_points),
        mde=float(np.mean([p.box.z - g.box.z for p, g in pairs])) if pairs else None,
        matched=len(pairs),
        missed=n_gt - len(pairs),
        frames=len(frames),
    )


class DepthBinAP(BaseModel):
    model_config = ConfigDict(frozen=True)

    depth_low: float
    depth_high: float
    iou_threshold: float
    ap3d: float
    ground_truth: int


def _depth_slice(ds: DetectionSet, low: float, high: float) -> DetectionSet:
    return replace(
        ds,
        predictions=[p for p in ds.predictions if low <= p.box.z < high],
        ground_truth=[g for g in ds.ground_truth if low <= g.box.z < high],
    )


def ap_by_depth(
    frames: Sequence[DetectionSet],
    iou_thresholds: Iterable[float] = (0.3, 0.5, 0.7),
    depth_bins: Sequence[float] = (0.0, 20.0, 40.0, math.inf),
) -> list[DepthBinAP]:
    """AP3D per depth bin and IoU3D threshold; boxes are binned by their own depth."""
    thresholds = list(iou_thresholds)
    rows = []
    for low, high in zip(depth_bins[:-1], depth_bins[1:]):
        sliced = [_depth_slice(ds, low, high) for ds in frames]
        overlaps = [_overlaps(ds, "iou3d") for ds in sliced]
        n_gt = sum(len(ds.ground_truth) for ds in sliced)
        for t in thresholds:
            rows.append(DepthBinAP(depth_low=low, depth_high=high, iou_threshold=t,
                                   ap3d=_ap_from_overlaps(sliced, overlaps, t, 40), ground_truth=n_gt))
    return rows


# Oracle substitution

_MASK_TOKEN = re.compile(r"theta|yaw|θ|\S")
_TOKEN_ALIASES = {"x": "x", "y": "y", "z": "z", "l": "l", "w": "w", "h": "h",
                  "t": "yaw", "theta": "yaw", "yaw": "yaw", "θ": "yaw"}


class OracleSpec(BaseModel):
    """Which box parameters to take from the associated ground truth.

    ``association="distance"`` pairs a prediction with the nearest GT centre
    within 4 m; ``"image"`` with the GT whose 2D box overlaps it most above
    IoU2D 0.7, breaking ties by centre distance.

    With ``along_ray``, substituting z without x and y slides the predicted
    centre along its camera ray, keeping its projection.
    """

    model_config = ConfigDict(frozen=True)

    params: frozenset[str] = frozenset()
    association: Association = "distance"
    distance_gate: float = Field(default=ORACLE_DISTANCE_GATE, gt=0)
    along_ray: bool = True

    @property
    def label(self) -> str:
        if not self.params:
            return "baseline"
        names = ["θ" if p == "yaw" else p for p in ORACLE_PARAMETERS if p in self.params]
        return "".join(names)

    @classmethod
    def parse(cls, mask: str, association: Association = "distance") -> "OracleSpec":
        """Parse a mask such as ``z``, ``xyz``, ``lwh`` or ``xyzlwhθ``; ``none`` is empty."""
        text = mask.strip().lower()
        if text in ("", "none", "baseline"):
            return cls(association=association)
        params = set()
        for token in _MASK_TOKEN.findall(text):
            if token in (",", "+"):
                continue
            if token not in _TOKEN_ALIASES:
                raise UnknownMask(token, mask)
            params.add(_TOKEN_ALIASES[token])
        return cls(params=frozenset(params), association=association)


def associate(ds: DetectionSet, spec: OracleSpec) -> list[int | None]:
    """Ground-truth index for every prediction, or None; several predictions may share one GT."""
    result: list[int | None] = []
    for p in ds.predictions:
        best, best_key = None, None
        for j, g in enumerate(ds.ground_truth):
            distance = center_distance(p.box, g.box)
            if spec.association == "distance":
                if distance >= spec.distance_gate:
                    continue
                key = (distance,)
            else:
                overlap = iou2d(p.projected.bbox2D, g.projected.bbox2D)
                if overlap <= MDE_IOU2D_THRESHOLD:
                    continue
                key = (-overlap, distance)
            if best_key is None or key < best_key:
                best, best_key = j, key
        result.append(best)
    return result


def oracle_substitute(ds: DetectionSet, spec: OracleSpec) -> DetectionSet:
    """Replace masked parameters of associated predictions with GT values.

    Unassociated predictions pass through and missed GT boxes are not added.
    """
    if not spec.params:
        return ds
    predictions = []
    for p, j in zip(ds.predictions, associate(ds, spec)):
        if j is None:
            predictions.append(p)
            continue
        gt = ds.ground_truth[j].box
        update = {name: getattr(gt, name) for name in spec.params}
        if spec.along_ray and "z" in spec.params:
            scale = gt.z / p.box.z
            update.setdefault("x", p.box.x * scale)
            update.setdefault("y", p.box.y * scale)
        box = p.box.model_copy(update=update)
        predictions.append(replace(p, box=box))
    return replace(ds, predictions=predictions)
