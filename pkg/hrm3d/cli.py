"""Command-line entry point.

Usage:
  hrm3d simulate --out runs/dh076 --delta-h 0.76 --model source-regressed --frames 50
  hrm3d eval --gt runs/dh076/gt --pred runs/dh076/pred --out runs/dh076/eval
  hrm3d sweep --out runs/sweep --seed 3
  hrm3d oracle --masks z,xyz,lwh --out runs/oracle

Exit codes: 0 success, 1 usage, configuration or I/O error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .config import SEED_ENV, RunConfig, build_config
from .errors import ConfigInvalid, Hrm3dError
from .evaluation import OracleSpec, ap_by_depth, evaluate
from .formats import load_detection_sets, write_label_dir, write_scene_csv
from .report import (
    ap_by_depth_csv,
    eval_csv,
    eval_table,
    oracle_csv,
    oracle_table,
    trend_csv,
    trend_svg,
    trend_table,
    verification_text,
    write_text,
)
from .scene_sim import generate_scenes
from .trend import MODEL_KEYS, build_heads, calibrate, emulate_frames, oracle_breakdown, run_sweep, verify_theorems

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFICATION = 2
MANIFEST = "manifest.yaml"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"Error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None, help=f"Master seed (default: file, then ${SEED_ENV}, then 0)")
    p.add_argument("--out", type=Path, default=None, help="Output directory (default: hrm3d-out)")
    p.add_argument("--frames", type=int, default=None, help="Frames per grid point (default: 200)")
    p.add_argument("-v", "--verbose", action="store_true", help="Debug logging")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=None, help="Depth noise std in meters (default: 0.5)")
    p.add_argument("--relu", choices=["on", "off"], default=None, help="ReLU guard on ground depth (default: on)")
    p.add_argument("--alpha-mode", choices=["product", "sum"], default=None,
                   help="Bottom-centre correction formulation (default: product)")
    p.add_argument("--fusion-weight", type=float, default=None,
                   help="Weight of the regressed estimate in the fused model (default: 0.5)")
    p.add_argument("--z-assumed", type=float, default=None,
                   help="Fixed object distance of the compensated model (default: 50)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hrm3d", description="Camera-height robust monocular 3D detection toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Write KITTI ground truth and emulated predictions")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--delta-h", type=float, default=None, help="Camera height change in meters (default: 0)")
    p.add_argument("--model", choices=MODEL_KEYS, default=None, help="Depth model (default: source-regressed)")

    p = sub.add_parser("eval", help="AP3D and MDE of a prediction directory")
    _add_common(p)
    p.add_argument("--gt", type=Path, required=True, help="Ground-truth label directory")
    p.add_argument("--pred", type=Path, required=True, help="Prediction label directory")
    p.add_argument("--delta-h", type=float, default=None,
                   help="Height change to report (default: from manifest.yaml beside --gt, else 0)")

    p = sub.add_parser("sweep", help="MDE trends across camera heights and theorem checks")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--grid", type=_float_list, default=None,
                   help="Comma-separated height changes (default: -0.70,-0.35,0,0.38,0.76)")
    p.add_argument("--models", type=_str_list, default=None, help=f"Comma-separated subset of {', '.join(MODEL_KEYS)}")
    p.add_argument("--workers", type=int, default=None, help="Grid points evaluated in parallel (default: 1)")

    p = sub.add_parser("oracle", help="Oracle parameter substitution breakdown")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--grid", type=_float_list, default=None, help="Comma-separated height changes")
    p.add_argument("--masks", type=_str_list, default=None,
                   help="Comma-separated masks over x,y,z,l,w,h,θ (default: x,y,z,xyz,lwh,xyzlwh,xyzlwhθ)")
    p.add_argument("--oracle-association", choices=["image", "distance"], default=None,
                   help="Prediction to GT association (default: image)")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, dict[str, Any]]:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    relu = get("relu")
    return {
        "run": {
            "seed": get("seed"),
            "out": get("out"),
            "frames": get("frames"),
            "delta_h": get("delta_h") if args.command == "simulate" else None,
            "model": get("model"),
            "workers": get("workers"),
        },
        "models": {
            "sigma": get("sigma"),
            "relu_guard": None if relu is None else relu == "on",
            "alpha_mode": get("alpha_mode"),
            "fusion_weight": get("fusion_weight"),
            "z_assumed": get("z_assumed"),
        },
        "sweep": {
            "grid": get("grid"),
            "models": get("models"),
            "masks": get("masks"),
            "oracle_association": get("oracle_association"),
        },
    }


def _show_progress() -> bool:
    return sys.stderr.isatty()


def cmd_simulate(cfg: RunConfig) -> int:
    out = cfg.run.out
    manifest = {
        "seed": cfg.run.seed,
        "delta_h": cfg.run.delta_h,
        "model": cfg.run.model,
        "frames": cfg.run.frames,
        "config_sha256": hashlib.sha256(cfg.canonical_yaml().encode("utf-8")).hexdigest(),
    }
    if cfg.run.frames > 0:
        sweep_cfg = cfg.sweep_config()
        params = calibrate(sweep_cfg)
        head = build_heads(params, sweep_cfg.anchor)[cfg.run.model]
        scenes = generate_scenes(sweep_cfg.training_scene, sweep_cfg.seed, sweep_cfg.frames, stream="evaluation")
        frames = emulate_frames(scenes, head, params, cfg.run.delta_h, sweep_cfg.seed,
                                show_progress=_show_progress())
        write_label_dir(out / "gt", frames, kind="gt")
        write_label_dir(out / "pred", frames, kind="pred")
        write_scene_csv(out / "scenes.csv", frames)
        params.save(out / "models.yaml")
    write_text(out / MANIFEST, yaml.safe_dump(manifest, sort_keys=True))
    print(f"OK: {cfg.run.frames} frames at dH={cfg.run.delta_h:+.2f} ({cfg.run.model}) written to {out}")
    return EXIT_OK


def _manifest_delta_h(gt_dir: Path) -> float | None:
    path = gt_dir.parent / MANIFEST
    if not path.exists():
        return None
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from exc
    value = data.get("delta_h")
    return None if value is None else float(value)


def cmd_eval(cfg: RunConfig, gt_dir: Path, pred_dir: Path, delta_h: float | None) -> int:
    if delta_h is None:
        delta_h = _manifest_delta_h(gt_dir) or 0.0
    frames = load_detection_sets(gt_dir, pred_dir, delta_h)
    result = evaluate(frames, delta_h)
    out = cfg.run.out
    write_text(out / "eval.csv", eval_csv([result]))
    write_text(out / "eval.txt", eval_table([result]))
    write_text(out / "ap_by_depth.csv", ap_by_depth_csv(ap_by_depth(frames)))
    print(eval_table([result]), end="")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.run.frames < 1:
        raise ConfigInvalid("sweep needs at least one frame per grid point")
    report = run_sweep(cfg.sweep_config(), show_progress=_show_progress())
    outcome = verify_theorems(report)
    out = cfg.run.out
    write_text(out / "trend.csv", trend_csv(report))
    write_text(out / "trend.txt", trend_table(report))
    write_text(out / "trend.svg", trend_svg(report))
    write_text(out / "verification.txt", verification_text(outcome))
    print(trend_table(report), end="")
    if not outcome.passed:
        for check in outcome.failures:
            print(f"FAIL {check.name}: {check.detail}", file=sys.stderr)
        print(f"FAILED: {len(outcome.failures)}/{len(outcome.checks)} verification checks", file=sys.stderr)
        return EXIT_VERIFICATION
    print(f"OK: {len(outcome.checks)}/{len(outcome.checks)} verification checks passed")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    if cfg.run.frames < 1:
        raise ConfigInvalid("oracle breakdown needs at least one frame per grid point")
    association = cfg.sweep.oracle_association
    specs = [OracleSpec.parse(m, association) for m in cfg.sweep.masks]
    rows = oracle_breakdown(cfg.sweep_config(), specs, association=association, show_progress=_show_progress())
    out = cfg.run.out
    write_text(out / "oracle.csv", oracle_csv(rows))
    write_text(out / "oracle.txt", oracle_table(rows))
    print(oracle_table(rows), end="")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args.config, _overrides(args))
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.gt, args.pred, args.delta_h)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_oracle(cfg)
    except Hrm3dError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
