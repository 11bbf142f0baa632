"""KITTI label lines, label directories and the self-describing scene CSV."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Iterable

from pydantic import BaseModel, ConfigDict, ValidationError

from .depth_models import ProjectedBox
from .errors import FrameMismatch, IoFailure, LabelFormatError
from .scene_sim import Box3D, Detection, DetectionSet

logger = logging.getLogger(__name__)

LABEL_PRECISION = 2
SCENE_CSV_COLUMNS = (
    "frame", "delta_h", "kind", "index", "label",
    "x", "y", "z", "l", "w", "h", "yaw", "score",
    "u_c", "v_c", "left", "top", "right", "bottom", "truncated", "gt_index",
)


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


class KittiLabelLine(BaseModel):
    """One object in KITTI label format.

    ``location`` is the bottom-face centre in camera coordinates; ``alpha`` is
    the observation angle rotation_y - atan2(x, z).
    """

    model_config = ConfigDict(frozen=True)

    type: str
    truncated: float = 0.0
    occluded: int = 0
    alpha: float = 0.0
    bbox: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]  # h, w, l
    location: tuple[float, float, float]
    rotation_y: float = 0.0
    score: float | None = None

    def to_line(self) -> str:
        p = LABEL_PRECISION
        values = [self.alpha, *self.bbox, *self.dimensions, *self.location, self.rotation_y]
        fields = [self.type, f"{self.truncated:.{p}f}", str(self.occluded)]
        fields += [f"{v:.{p}f}" for v in values]
        if self.score is not None:
            fields.append(f"{self.score:.{p}f}")
        return " ".join(fields)

    @classmethod
    def parse(cls, line: str) -> "KittiLabelLine":
        parts = line.split()
        if len(parts) not in (15, 16):
            raise LabelFormatError(f"expected 15 or 16 fields, got {len(parts)}: {line!r}")
        try:
            nums = [float(v) for v in parts[1:]]
            return cls(
                type=parts[0],
                truncated=nums[0],
                occluded=int(nums[1]),
                alpha=nums[2],
                bbox=tuple(nums[3:7]),
                dimensions=tuple(nums[7:10]),
                location=tuple(nums[10:13]),
                rotation_y=nums[13],
                score=nums[14] if len(nums) == 15 else None,
            )
        except (ValueError, ValidationError) as exc:
            raise LabelFormatError(f"malformed label line {line!r}: {exc}") from exc

    @classmethod
    def from_detection(cls, det: Detection, *, with_score: bool) -> "KittiLabelLine":
        box = det.box
        return cls(
            type=box.label,
            truncated=1.0 if det.projected.truncated else 0.0,
            occluded=0,
            alpha=_wrap_angle(box.yaw - math.atan2(box.x, box.z)),
            bbox=det.projected.bbox2D,
            dimensions=(box.h, box.w, box.l),
            location=(box.x, box.bottom, box.z),
            rotation_y=box.yaw,
            score=box.score if with_score else None,
        )

    def to_detection(self) -> Detection:
        """Box and 2D observables; the projected centre is taken as the 2D box centre."""
        h, w, l = self.dimensions
        x, y_bottom, z = self.location
        left, top, right, bottom = self.bbox
        try:
            box = Box3D(x=x, y=y_bottom - h / 2, z=z, l=l, w=w, h=h, yaw=self.rotation_y,
                        label=self.type, score=1.0 if self.score is None else self.score)
            projected = ProjectedBox(u_c=(left + right) / 2, v_c=(top + bottom) / 2,
                                     bbox2D=self.bbox, truncated=self.truncated > 0)
        except ValidationError as exc:
            raise LabelFormatError(f"label does not describe a valid box: {exc}") from exc
        return Detection(box=box, projected=projected)


def format_labels(detections: Iterable[Detection], *, with_score: bool) -> str:
    lines = [KittiLabelLine.from_detection(d, with_score=with_score).to_line() for d in detections]
    return "".join(line + "\n" for line in lines)


def parse_labels(text: str) -> list[Detection]:
    return [KittiLabelLine.parse(line).to_detection() for line in text.splitlines() if line.strip()]


def write_label_dir(directory: Path, frames: Iterable[DetectionSet], *, kind: str) -> None:
    """Write one ``<frame_id>.txt`` per frame; ``kind`` is ``gt`` or ``pred``."""
    if kind not in ("gt", "pred"):
        raise ValueError(f"kind must be 'gt' or 'pred', got {kind!r}")
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for ds in frames:
            dets = ds.ground_truth if kind == "gt" else ds.predictions
            (directory / f"{ds.frame_id}.txt").write_text(format_labels(dets, with_score=kind == "pred"),
                                                         encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write labels to {directory}: {exc}") from exc


def read_label_dir(directory: Path) -> dict[str, list[Detection]]:
    """Detections per frame id, in frame-id order."""
    if not directory.is_dir():
        raise IoFailure(f"label directory not found: {directory}")
    frames = {}
    try:
        for path in sorted(directory.glob("*.txt")):
            frames[path.stem] = parse_labels(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read labels from {directory}: {exc}") from exc
    return frames


def load_detection_sets(gt_dir: Path, pred_dir: Path, delta_h: float = 0.0) -> list[DetectionSet]:
    """Pair ground truth with predictions by frame id.

    An empty prediction directory means no predictions for any frame.
    """
    gt = read_label_dir(gt_dir)
    pred = read_label_dir(pred_dir) if pred_dir.exists() else {}
    if pred:
        missing_pred = sorted(set(gt) - set(pred))
        missing_gt = sorted(set(pred) - set(gt))
        if missing_pred or missing_gt:
            raise FrameMismatch(missing_pred, missing_gt)
    else:
        logger.warning("no prediction files in %s; every frame has zero predictions", pred_dir)
    return [DetectionSet(frame_id=fid, delta_h=delta_h, predictions=pred.get(fid, []), ground_truth=boxes)
            for fid, boxes in gt.items()]


def _scene_rows(ds: DetectionSet) -> Iterable[list[str]]:
    for kind, dets in (("gt", ds.ground_truth), ("pred", ds.predictions)):
        for i, d in enumerate(dets):
            b, pb = d.box, d.projected
            yield [
                ds.frame_id, f"{ds.delta_h:.6f}", kind, str(i), b.label,
                *(f"{v:.6f}" for v in (b.x, b.y, b.z, b.l, b.w, b.h, b.yaw, b.score, pb.u_c, pb.v_c, *pb.bbox2D)),
                str(int(pb.truncated)), "" if d.gt_index is None else str(d.gt_index),
            ]


def write_scene_csv(path: Path, frames: Iterable[DetectionSet]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SCENE_CSV_COLUMNS)
            for ds in frames:
                writer.writerows(_scene_rows(ds))
    except OSError as exc:
        raise IoFailure(f"cannot write scene CSV {path}: {exc}") from exc


def read_scene_csv(path: Path) -> list[DetectionSet]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read scene CSV {path}: {exc}") from exc
    frames: dict[str, DetectionSet] = {}
    for row in rows:
        ds = frames.setdefault(row["frame"], DetectionSet(frame_id=row["frame"], delta_h=float(row["delta_h"])))
        box = Box3D(**{k: float(row[k]) for k in ("x", "y", "z", "l", "w", "h", "yaw", "score")}, label=row["label"])
        projected = ProjectedBox(
            u_c=float(row["u_c"]),
            v_c=float(row["v_c"]),
            bbox2D=tuple(float(row[k]) for k in ("left", "top", "right", "bottom")),
            truncated=row["truncated"] == "1",
        )
        det = Detection(box=box, projected=projected, gt_index=int(row["gt_index"]) if row["gt_index"] else None)
        (ds.ground_truth if row["kind"] == "gt" else ds.predictions).append(det)
    return list(frames.values())
