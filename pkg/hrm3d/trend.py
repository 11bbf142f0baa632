"""Height sweeps: emulate every depth model across camera height changes.

Models are calibrated on scenes seen from the training height only, then the
same evaluation scenes are re-observed at every height change of the grid.
All models at a grid point share their noise and score draws, so differences
between rows come from the depth heads alone.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .depth_models import (
    Anchor,
    CompensatedHead,
    DepthHead,
    Formulation,
    FusedHead,
    FusionModel,
    GroundDepthModel,
    GroundHead,
    ModelParameters,
    OracleHead,
    RegressedHead,
    calibrate_regressor,
    fit_alpha,
    fit_fusion_weight,
    optimize_z_assumed,
)
from .errors import ConfigInvalid
from .evaluation import Association, OracleSpec, depth_error_pairs, evaluate, oracle_substitute
from .scene_sim import (
    DetectionSet,
    Scene,
    SceneConfig,
    emulate_detector,
    frame_seed,
    generate_scenes,
    observe,
    training_observations,
)

logger = logging.getLogger(__name__)

ModelKey = Literal[
    "source-regressed", "ground", "fused", "fused-learned", "compensated", "compensated++", "oracle"
]
MODEL_KEYS: tuple[str, ...] = (
    "source-regressed", "ground", "fused", "fused-learned", "compensated", "compensated++", "oracle"
)
DEFAULT_GRID = (-0.70, -0.35, 0.0, 0.38, 0.76)
DEFAULT_MODELS = ("source-regressed", "ground", "fused", "fused-learned", "compensated", "compensated++")


class SweepConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid: tuple[float, ...] = DEFAULT_GRID
    frames: int = Field(default=200, ge=1)
    calibration_frames: int = Field(default=200, ge=1)
    seed: int = 0
    sigma: float = Field(default=0.5, ge=0.0)
    models: tuple[ModelKey, ...] = DEFAULT_MODELS
    alpha_mode: Formulation = "product"
    relu_guard: bool = True
    fusion_weight: float = Field(default=0.5, ge=0.0, le=1.0)
    z_assumed: float = Field(default=50.0, gt=0)
    anchor: Anchor = "appearance"
    workers: int = Field(default=1, ge=1)
    scene: SceneConfig = Field(default_factory=SceneConfig)

    @property
    def training_scene(self) -> SceneConfig:
        return self.scene.model_copy(update={"delta_h": 0.0})


class TrendRow(BaseModel):
    """One model at one grid point.

    ``predicted_mde`` and ``unclamped_mde`` average the analytic and the
    empirical depth error over the same matched predictions, those whose
    depth was not floored.
    """

    model_config = ConfigDict(frozen=True)

    delta_h: float
    mde: float | None
    predicted_mde: float | None
    unclamped_mde: float | None = None
    unclamped: int = 0
    ap3d_70: float
    ap3d_50: float
    matched: int
    missed: int


def fit_slope(rows: Sequence[TrendRow], attr: str = "mde") -> float | None:
    """OLS slope of ``attr`` over delta_h; None with fewer than two distinct grid points."""
    points = [(r.delta_h, getattr(r, attr)) for r in rows if getattr(r, attr) is not None]
    if len({dh for dh, _ in points}) < 2:
        return None
    x, y = (np.array(c, dtype=float) for c in zip(*points))
    return float(np.polyfit(x, y, 1)[0])


class ModelTrend(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    rows: list[TrendRow]

    @property
    def slope(self) -> float | None:
        return fit_slope(self.rows)

    @property
    def predicted_slope(self) -> float | None:
        return fit_slope(self.rows, "predicted_mde")

    @property
    def slope_sign(self) -> int | None:
        s = self.slope
        return None if s is None else int(np.sign(s))

    def row_at(self, delta_h: float) -> TrendRow | None:
        for r in self.rows:
            if math.isclose(r.delta_h, delta_h, abs_tol=1e-9):
                return r
        return None


class TrendReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid: tuple[float, ...]
    sigma: float
    parameters: ModelParameters
    models: dict[str, ModelTrend]


def calibrate(cfg: SweepConfig) -> ModelParameters:
    """Fit every estimator on scenes observed at the training height."""
    scenes = generate_scenes(cfg.training_scene, cfg.seed, cfg.calibration_frames, stream="calibration")
    observations = training_observations(scenes)
    intrinsics = cfg.scene.intrinsics
    regressor = calibrate_regressor(observations, intrinsics)
    alpha = fit_alpha(observations, cfg.alpha_mode)
    ground = GroundDepthModel(alpha=alpha, formulation=cfg.alpha_mode, relu_guard=cfg.relu_guard)
    learned = fit_fusion_weight(observations, cfg.training_scene.camera(), ground, regressor)
    return ModelParameters(
        beta=regressor.beta,
        z_max=regressor.z_max,
        z_min=regressor.z_min,
        alpha=alpha,
        formulation=cfg.alpha_mode,
        relu_guard=cfg.relu_guard,
        fusion_weight=cfg.fusion_weight,
        learned_fusion_weight=learned.weight,
        sigma=cfg.sigma,
        z_assumed=cfg.z_assumed,
        z_assumed_optimized=optimize_z_assumed(observations),
    )


def build_heads(params: ModelParameters, anchor: Anchor = "appearance") -> dict[str, DepthHead]:
    regressed = RegressedHead(params.regressor, name="source-regressed")
    ground = GroundHead(params.ground, anchor=anchor)
    return {
        "source-regressed": regressed,
        "ground": ground,
        "fused": FusedHead(regressed, ground, FusionModel(weight=params.fusion_weight)),
        "fused-learned": FusedHead(regressed, ground, FusionModel(weight=params.learned_fusion_weight),
                                   name="fused-learned"),
        "compensated": CompensatedHead(params.regressor, z_assumed=params.z_assumed),
        "compensated++": CompensatedHead(params.regressor, z_assumed=params.z_assumed_optimized,
                                         name="compensated++"),
        "oracle": OracleHead(regressed),
    }


def emulate_frames(
    scenes: Sequence[Scene],
    head: DepthHead,
    params: ModelParameters,
    delta_h: float,
    seed: int,
    *,
    show_progress: bool = False,
) -> list[DetectionSet]:
    frames = []
    for i, scene in enumerate(tqdm(scenes, desc=f"{head.name} dH={delta_h:+.2f}", disable=not show_progress)):
        frames.append(emulate_detector(
            scene,
            observe(scene, delta_h),
            head,
            params.noise,
            frame_seed(seed, "noise", i),
            delta_h=delta_h,
            reference=observe(scene, 0.0),
            frame_id=f"{i:06d}",
        ))
    return frames


def trend_row(frames: Sequence[DetectionSet], delta_h: float) -> TrendRow:
    result = evaluate(frames, delta_h)
    pairs = [(p, g) for p, g in depth_error_pairs(frames) if p.expected_bias is not None and not p.clamped]
    errors = [p.box.z - g.box.z for p, g in pairs]
    return TrendRow(
        delta_h=delta_h,
        mde=result.mde,
        predicted_mde=float(np.mean([p.expected_bias for p, _ in pairs])) if pairs else None,
        unclamped_mde=float(np.mean(errors)) if errors else None,
        unclamped=len(pairs),
        ap3d_70=result.ap3d_70,
        ap3d_50=result.ap3d_50,
        matched=result.matched,
        missed=result.missed,
    )


@dataclass(frozen=True)
class _PointJob:
    scenes: list[Scene]
    params: ModelParameters
    models: tuple[str, ...]
    anchor: str
    delta_h: float
    seed: int
    show_progress: bool = False


def _run_point(job: _PointJob) -> dict[str, TrendRow]:
    heads = build_heads(job.params, job.anchor)
    rows = {}
    for key in job.models:
        frames = emulate_frames(job.scenes, heads[key], job.params, job.delta_h, job.seed,
                                show_progress=job.show_progress)
        rows[key] = trend_row(frames, job.delta_h)
    return rows


def run_sweep(cfg: SweepConfig, *, show_progress: bool = False) -> TrendReport:
    """Calibrate at the training height and evaluate every model at every grid point."""
    if not any(dh == 0.0 for dh in cfg.grid):
        raise ConfigInvalid(f"sweep grid {list(cfg.grid)} must contain 0")
    if not cfg.models:
        raise ConfigInvalid("sweep needs at least one model")
    grid = tuple(sorted(set(cfg.grid)))
    params = calibrate(cfg)
    scenes = generate_scenes(cfg.training_scene, cfg.seed, cfg.frames, stream="evaluation")
    jobs = [_PointJob(scenes, params, tuple(cfg.models), cfg.anchor, dh, cfg.seed,
                      show_progress and cfg.workers == 1) for dh in grid]

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(tqdm(pool.map(_run_point, jobs), total=len(jobs), desc="grid",
                                disable=not show_progress))
    else:
        results = [_run_point(job) for job in jobs]

    models = {}
    for key in cfg.models:
        models[key] = ModelTrend(model=key, rows=[r[key] for r in results])
        logger.info("%s: slope %s", key, models[key].slope)
    return TrendReport(grid=grid, sigma=cfg.sigma, parameters=params, models=models)


# Verification


class VerificationTolerances(BaseModel):
    model_config = ConfigDict(frozen=True)

    regress_abs: float = 1e-6
    ground_rel: float = 0.10
    fused_slope_ratio: float = 0.25
    cancellation_min_dh: float = 0.35
    source_ratio: float = 0.25
    source_ratio_min_dh: float = 0.70
    noise_sigmas: float = 4.0


class CheckResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    passed: bool
    detail: str


class VerificationOutcome(BaseModel):
    checks: list[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append(CheckResult(name=name, passed=bool(passed), detail=detail))


def _noise_allowance(row: TrendRow, sigma: float, k: float) -> float:
    if sigma == 0 or row.unclamped == 0:
        return 0.0
    return k * sigma / math.sqrt(row.unclamped)


def _check_slope(outcome: VerificationOutcome, trend: ModelTrend, sign: int) -> None:
    slope = trend.slope
    want = "negative" if sign < 0 else "positive"
    if slope is None:
        outcome.add(f"{trend.model} slope", False, "degenerate slope: fewer than two grid points with an MDE")
        return
    outcome.add(f"{trend.model} slope", np.sign(slope) == sign, f"slope {slope:+.4f} m/m, expected {want}")


def _check_pointwise(
    outcome: VerificationOutcome, trend: ModelTrend, sigma: float, tol: VerificationTolerances, relative: float, absolute: float
) -> None:
    for row in trend.rows:
        if row.unclamped_mde is None or row.predicted_mde is None:
            continue
        gap = abs(row.unclamped_mde - row.predicted_mde)
        allowed = relative * abs(row.predicted_mde) + absolute + _noise_allowance(row, sigma, tol.noise_sigmas)
        outcome.add(
            f"{trend.model} dH={row.delta_h:+.2f}",
            gap <= allowed,
            f"empirical {row.unclamped_mde:+.6f} vs predicted {row.predicted_mde:+.6f} (|gap| {gap:.2e} <= {allowed:.2e})",
        )


def _check_ap_decay(outcome: VerificationOutcome, trend: ModelTrend) -> None:
    """AP3D70 falls away from the training height: strictly while positive, then stays at zero."""
    start = trend.row_at(0.0)
    if start is None:
        return
    for side, label in ((1.0, "dH>0"), (-1.0, "dH<0")):
        rows = sorted((r for r in trend.rows if r.delta_h * side > 0), key=lambda r: abs(r.delta_h))
        if not rows:
            continue
        prev = start
        steps = []
        for row in rows:
            ok = row.ap3d_70 < prev.ap3d_70 if prev.ap3d_70 > 0 else row.ap3d_70 <= prev.ap3d_70
            steps.append((ok, f"{prev.ap3d_70:.2f}@{prev.delta_h:+.2f} -> {row.ap3d_70:.2f}@{row.delta_h:+.2f}"))
            prev = row
        outcome.add(f"{trend.model} AP3D70 {label}", all(ok for ok, _ in steps),
                    ", ".join(text for _, text in steps))


def verify_theorems(report: TrendReport, tolerances: VerificationTolerances | None = None) -> VerificationOutcome:
    """Check trend signs, analytic agreement, cancellation and AP decay; failures are outcomes."""
    tol = tolerances or VerificationTolerances()
    outcome = VerificationOutcome()
    models = report.models
    regressed = models.get("source-regressed")
    ground = models.get("ground")
    fused = models.get("fused")

    if regressed is not None:
        _check_slope(outcome, regressed, -1)
        _check_pointwise(outcome, regressed, report.sigma, tol, 0.0, tol.regress_abs)
        _check_ap_decay(outcome, regressed)
    if ground is not None:
        _check_slope(outcome, ground, +1)
        _check_pointwise(outcome, ground, report.sigma, tol, tol.ground_rel, 1e-9)

    if regressed is not None and ground is not None and fused is not None:
        for row in fused.rows:
            if abs(row.delta_h) < tol.cancellation_min_dh or row.mde is None:
                continue
            g, r = ground.row_at(row.delta_h), regressed.row_at(row.delta_h)
            if g is None or r is None or g.mde is None or r.mde is None:
                continue
            bound = min(abs(g.mde), abs(r.mde))
            outcome.add(f"cancellation dH={row.delta_h:+.2f}", abs(row.mde) < bound,
                        f"|fused| {abs(row.mde):.4f} < min(|ground|, |regressed|) {bound:.4f}")
            if abs(row.delta_h) >= tol.source_ratio_min_dh:
                outcome.add(f"fused vs source dH={row.delta_h:+.2f}",
                            abs(row.mde) < tol.source_ratio * abs(r.mde),
                            f"|fused| {abs(row.mde):.4f} < {tol.source_ratio} * |source| {abs(r.mde):.4f}")
        fs, gs, rs = fused.slope, ground.slope, regressed.slope
        if fs is not None and gs is not None and rs is not None:
            bound = tol.fused_slope_ratio * min(abs(gs), abs(rs))
            outcome.add("fused slope", abs(fs) < bound, f"|fused slope| {abs(fs):.4f} < {bound:.4f}")

    compensated = models.get("compensated")
    if compensated is not None and regressed is not None and fused is not None:
        far = max(report.grid, key=abs)
        c, r, f = compensated.row_at(far), regressed.row_at(far), fused.row_at(far)
        if far != 0.0 and all(x is not None and x.mde is not None for x in (c, r, f)):
            outcome.add(f"compensated ordering dH={far:+.2f}",
                        abs(f.mde) < abs(c.mde) < abs(r.mde),
                        f"|fused| {abs(f.mde):.4f} < |compensated| {abs(c.mde):.4f} < |source| {abs(r.mde):.4f}")
    return outcome


# Oracle breakdown


class OracleRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    mask: str
    delta_h: float
    ap3d_70: float
    ap3d_50: float
    mde: float | None
    matched: int


def oracle_breakdown(
    cfg: SweepConfig,
    masks: Sequence[OracleSpec],
    *,
    association: Association = "image",
    show_progress: bool = False,
) -> list[OracleRow]:
    """AP3D and MDE of the source regressor per substitution mask and grid point.

    The baseline row (no substitution) always comes first for each grid point.
    """
    specs = [OracleSpec(association=association)]
    specs += [s.model_copy(update={"association": association}) for s in masks if s.params]
    params = calibrate(cfg)
    head = build_heads(params, cfg.anchor)["source-regressed"]
    scenes = generate_scenes(cfg.training_scene, cfg.seed, cfg.frames, stream="evaluation")
    rows = []
    for dh in sorted(set(cfg.grid)):
        frames = emulate_frames(scenes, head, params, dh, cfg.seed, show_progress=show_progress)
        for spec in specs:
            result = evaluate([oracle_substitute(ds, spec) for ds in frames], dh)
            rows.append(OracleRow(mask=spec.label, delta_h=dh, ap3d_70=result.ap3d_70,
                                  ap3d_50=result.ap3d_50, mde=result.mde, matched=result.matched))
    return rows
