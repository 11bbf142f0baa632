"""Run configuration.

A config file is YAML restricted to one level of sections holding flat
``key: value`` pairs (lists in flow style)::

    run:
      seed: 7
      frames: 200
    scene:
      depth_range: [5.0, 60.0]
    models:
      sigma: 0.5
      relu_guard: true
    sweep:
      grid: [-0.70, -0.35, 0.0, 0.38, 0.76]

Precedence: command-line flags, then the file, then ``HRM3D_SEED`` (seed only),
then the defaults below.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Mapping

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .depth_models import Anchor, Formulation
from .errors import ConfigInvalid
from .evaluation import Association
from .scene_sim import SceneConfig
from .trend import DEFAULT_GRID, DEFAULT_MODELS, ModelKey, SweepConfig

SEED_ENV = "HRM3D_SEED"
SECTIONS = ("run", "scene", "models", "sweep")
DEFAULT_MASKS = ("x", "y", "z", "xyz", "lwh", "xyzlwh", "xyzlwhθ")


class RunSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0
    out: Path = Path("hrm3d-out")
    frames: int = Field(default=200, ge=0)
    calibration_frames: int = Field(default=200, ge=1)
    delta_h: float = 0.0
    model: ModelKey = "source-regressed"
    workers: int = Field(default=1, ge=1)


class ModelSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(default=0.5, ge=0.0)
    relu_guard: bool = True
    alpha_mode: Formulation = "product"
    fusion_weight: float = Field(default=0.5, ge=0.0, le=1.0)
    z_assumed: float = Field(default=50.0, gt=0)
    anchor: Anchor = "appearance"


class SweepSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid: tuple[float, ...] = DEFAULT_GRID
    models: tuple[ModelKey, ...] = DEFAULT_MODELS
    masks: tuple[str, ...] = DEFAULT_MASKS
    oracle_association: Association = "image"


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    run: RunSection = Field(default_factory=RunSection)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    models: ModelSection = Field(default_factory=ModelSection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(
            grid=self.sweep.grid,
            frames=self.run.frames,
            calibration_frames=self.run.calibration_frames,
            seed=self.run.seed,
            sigma=self.models.sigma,
            models=self.sweep.models,
            alpha_mode=self.models.alpha_mode,
            relu_guard=self.models.relu_guard,
            fusion_weight=self.models.fusion_weight,
            z_assumed=self.models.z_assumed,
            anchor=self.models.anchor,
            workers=self.run.workers,
            scene=self.scene,
        )

    def canonical_yaml(self) -> str:
        """Stable text form used for the manifest hash."""
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)


def _key_lines(text: str) -> dict[tuple[str, ...], int]:
    """1-based line of every section and key, for diagnostics."""
    node = yaml.compose(text)
    lines: dict[tuple[str, ...], int] = {}
    if not isinstance(node, yaml.MappingNode):
        return lines
    for key_node, value_node in node.value:
        section = str(key_node.value)
        lines[(section,)] = key_node.start_mark.line + 1
        if isinstance(value_node, yaml.MappingNode):
            for k, _ in value_node.value:
                lines[(section, str(k.value))] = k.start_mark.line + 1
    return lines


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, Any]]:
    """Parse and shape-check a config file, returning its raw sections."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigInvalid(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        return {}
    lines = _key_lines(text)
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{source}: top level must be a mapping of sections")
    for section, body in data.items():
        where = f"{source}:{lines.get((str(section),), '?')}"
        if section not in SECTIONS:
            raise ConfigInvalid(f"{where}: unknown section {section!r} (expected one of {', '.join(SECTIONS)})")
        if not isinstance(body, dict):
            raise ConfigInvalid(f"{where}: section {section!r} must hold key: value pairs")
        for key, value in body.items():
            if isinstance(value, dict):
                line = lines.get((section, str(key)), "?")
                raise ConfigInvalid(f"{source}:{line}: {section}.{key}: nested sections are not allowed")
    return data


def _merge(base: Mapping[str, Mapping[str, Any]], overrides: Mapping[str, Mapping[str, Any]]) -> dict[str, dict[str, Any]]:
    merged = {section: dict(values) for section, values in base.items()}
    for section, values in overrides.items():
        merged.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})
    return merged


def build_config(
    path: Path | None = None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Assemble a RunConfig from an optional file, flag overrides and the environment."""
    environ = os.environ if environ is None else environ
    source = str(path) if path is not None else "<flags>"
    text = ""
    if path is not None:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    raw = parse_config_text(text, source) if text else {}
    lines = _key_lines(text) if text else {}
    merged = _merge(raw, overrides or {})

    if "seed" not in merged.get("run", {}) and environ.get(SEED_ENV):
        try:
            merged.setdefault("run", {})["seed"] = int(environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigInvalid(f"{SEED_ENV}={environ[SEED_ENV]!r} is not an integer") from exc

    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = tuple(str(p) for p in err["loc"])
            line = lines.get(loc[:2]) or lines.get(loc[:1])
            where = f"{source}:{line}" if line else source
            problems.append(f"{where}: {'.'.join(loc)}: {err['msg']}")
        raise ConfigInvalid("\n".join(problems)) from exc
