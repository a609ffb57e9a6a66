"""Command-line entry point: align / eval / export / synth / validate.

Configuration can come from a TOML file (--config); explicit flags always
win. Every run is deterministic given --seed. Errors exit with status 1 and
a single machine-parseable line on stderr:

    error: <module>: <message>

Usage problems (unknown flags, missing subcommand) exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

from . import evaluate, pointcloud, synthetic
from .camera import LossWeights
from .mesh import MeshError
from .objective import EvaluationError
from .optimize import (
    DivergenceError,
    OptimizerConfig,
    align,
    load_state,
    save_state,
)
from .pfm import PfmError
from .scene import (
    Scene,
    SceneError,
    load_scene,
    normalize_depths,
    save_scene,
    validate_scene,
)


class ConfigError(RuntimeError):
    pass


_ERROR_MODULES = [
    (SceneError, "scene"),
    (PfmError, "pfm"),
    (MeshError, "mesh"),
    (EvaluationError, "objective"),
    (DivergenceError, "optimize"),
    (evaluate.HoldoutError, "evaluate"),
    (pointcloud.ExportError, "pointcloud"),
    (synthetic.SynthesisError, "synthetic"),
    (ConfigError, "cli"),
    (FileNotFoundError, "scene"),
]

_BASELINES = ("full", "camera-only", "traditional-ba")


def _error_module(err: BaseException) -> str:
    for etype, name in _ERROR_MODULES:
        if isinstance(err, etype):
            return name
    return "cli"


def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")


def _dataclass_from(cls, base, table: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return replace(base, **table)


def _effective_config(args) -> tuple:
    """Merge TOML config (if any) with command-line flags; flags win."""
    doc = _load_toml(args.config) if getattr(args, "config", None) else {}
    for section in set(doc) - {"optimizer", "weights", "eval", "export"}:
        raise ConfigError(f"unknown config section [{section}]")
    opt = _dataclass_from(OptimizerConfig, OptimizerConfig(), doc.get("optimizer", {}),
                          "optimizer")
    weights = _dataclass_from(LossWeights, LossWeights(), doc.get("weights", {}),
                              "weights")
    ev = dict(doc.get("eval", {}))
    ex = dict(doc.get("export", {}))

    overrides = {}
    for name in ("seed", "iterations_camera", "iterations_deform", "iterations_ba"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        opt = replace(opt, **overrides)

    stride = getattr(args, "stride", None)
    if stride is None:
        stride = int(ex.get("stride", 2))
    holdout = getattr(args, "holdout", None)
    if holdout is None:
        holdout = int(ev.get("holdout", 5))
    alphas = getattr(args, "alpha", None) or ev.get("alphas") or [0.03]
    alphas = [float(a) for a in alphas]
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {a}")
    baselines = getattr(args, "baseline", None) or ev.get("baselines") or list(_BASELINES)
    for b in baselines:
        if b not in _BASELINES:
            raise ConfigError(f"unknown baseline '{b}' (choose from {', '.join(_BASELINES)})")
    return opt, weights, {"stride": stride, "holdout": holdout, "alphas": alphas,
                          "baselines": list(baselines)}


def _config_echo(opt: OptimizerConfig, weights: LossWeights, run: dict) -> dict:
    return {"optimizer": asdict(opt), "weights": asdict(weights), **run}


def _set_threads(args) -> None:
    n = getattr(args, "threads", None)
    if n is None:
        env = os.environ.get("WARPSFM_THREADS")
        n = int(env) if env else None
    if n:
        try:
            import numba

            numba.set_num_threads(n)
        except ImportError:
            pass


def _load_normalized(scene_dir) -> Scene:
    scene = load_scene(scene_dir)
    report = validate_scene(scene)
    if not report.ok:
        raise SceneError(f"scene failed validation: {report.errors[0]}")
    return normalize_depths(scene)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_align(args) -> int:
    opt, weights, run = _effective_config(args)
    _set_threads(args)
    scene = _load_normalized(args.scene)
    result = align(scene, config=opt, weights=weights, use_l2d=args.l2d)
    state = result.camera_state if args.skip_deform else result.state
    out = Path(args.out)
    final_trace = result.trace_camera if args.skip_deform else result.trace_deform
    extra = {
        "config": _config_echo(opt, weights, {"stride": run["stride"], "l2d": args.l2d,
                                              "skip_deform": args.skip_deform}),
        "final_loss": final_trace[-1] if final_trace else {},
        "traces": {"camera": result.trace_camera, "deform": result.trace_deform},
    }
    pointcloud.export_all(scene, state, out, stride=run["stride"], extra=extra)
    save_state(out / "state.npz", state, depth_normalizer=scene.depth_normalizer)
    return 0


def _cmd_eval(args) -> int:
    opt, weights, run = _effective_config(args)
    _set_threads(args)
    scene = _load_normalized(args.scene)
    split = evaluate.holdout_split(scene.correspondences, run["holdout"], seed=opt.seed)
    train = Scene(images=scene.images, correspondences=split.train,
                  depth_normalizer=scene.depth_normalizer)

    result = align(train, config=opt, weights=weights)
    states = {}
    if "full" in run["baselines"]:
        states["full"] = result.state
    if "camera-only" in run["baselines"]:
        states["camera-only"] = result.camera_state

    pcc_table = {name: {} for name in run["baselines"]}
    n_pairs = None
    for name, state in states.items():
        for a in run["alphas"]:
            res = evaluate.pcc(train, state, split.holdout, alpha=a)
            pcc_table[name][str(a)] = res.fraction
            n_pairs = res.n_pairs

    ba = None
    if "traditional-ba" in run["baselines"]:
        ba = evaluate.traditional_ba(train, config=opt)
        for a in run["alphas"]:
            res = evaluate.pcc_ba(train, ba, split.holdout, alpha=a)
            pcc_table["traditional-ba"][str(a)] = res.fraction
            n_pairs = res.n_pairs

    rotation = None
    gt_path = Path(args.scene) / "ground_truth.json"
    if gt_path.exists():
        gt_cams = synthetic.load_ground_truth(gt_path)
        rotation = {}
        if "full" in states:
            rotation["full"] = evaluate.relative_rotation_error(states["full"].cams, gt_cams)
        if "camera-only" in states:
            rotation["camera-only"] = evaluate.relative_rotation_error(
                states["camera-only"].cams, gt_cams
            )
        if ba is not None:
            rotation["traditional-ba"] = evaluate.relative_rotation_error(ba.cams, gt_cams)

    doc = {
        "alphas": run["alphas"],
        "holdout": run["holdout"],
        "n_holdout_pairs": n_pairs,
        "pcc": pcc_table,
        "rotation_error_deg": rotation,
        "config": _config_echo(opt, weights, {"holdout": run["holdout"],
                                              "alphas": run["alphas"],
                                              "baselines": run["baselines"]}),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def _cmd_export(args) -> int:
    opt, weights, run = _effective_config(args)
    _set_threads(args)
    scene = _load_normalized(args.scene)
    state, saved_norm = load_state(args.state)
    if abs(scene.depth_normalizer - saved_norm) > 1e-9 * max(abs(saved_norm), 1.0):
        raise ConfigError(
            f"scene depth normalizer {scene.depth_normalizer!r} does not match "
            f"the checkpoint's {saved_norm!r}; the scene changed since alignment"
        )
    extra = {"config": {"stride": run["stride"], "state": str(args.state)}}
    pointcloud.export_all(scene, state, Path(args.out), stride=run["stride"], extra=extra)
    return 0


def _cmd_synth(args) -> int:
    spec = synthetic.SyntheticSpec(
        n_cameras=args.cameras,
        image_size=(args.width, args.height),
        n_points=args.points,
        texture=args.texture,
        delta=args.delta,
        depth_noise=args.depth_noise,
        seed=args.seed if args.seed is not None else 0,
    )
    scene, gt = synthetic.generate_scene(spec)
    if spec.delta > 0:
        scene = synthetic.perturb_scene(scene, spec.delta, spec.seed + 1)
    out = Path(args.out)
    save_scene(scene, out)
    (out / "ground_truth.json").write_text(synthetic.ground_truth_json_text(gt) + "\n")
    return 0


def _cmd_validate(args) -> int:
    scene = load_scene(args.scene)
    report = validate_scene(scene)
    doc = {
        "ok": report.ok,
        "errors": report.errors,
        "warnings": report.warnings,
        "stats": report.stats,
    }
    print(json.dumps(doc, separators=(",", ":")))
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file (flags take precedence)")
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker thread cap (default: WARPSFM_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="warpsfm",
        description="Camera alignment and 3D reconstruction from inconsistent images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="align a scene and export all artifacts")
    p.add_argument("--scene", required=True, help="scene directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stride", type=int, default=None, help="point-cloud pixel stride")
    p.add_argument("--l2d", action="store_true",
                   help="use the 2D reprojection data term instead of the 3D term")
    p.add_argument("--skip-deform", action="store_true",
                   help="stop after the camera stage (no mesh deformation)")
    p.add_argument("--iterations-camera", type=int, default=None, dest="iterations_camera")
    p.add_argument("--iterations-deform", type=int, default=None, dest="iterations_deform")
    _add_common(p)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("eval", help="holdout evaluation with baselines")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--holdout", type=int, default=None, help="held-out point count")
    p.add_argument("--alpha", type=float, action="append", default=None,
                   help="PCC radius as a fraction of image size (repeatable)")
    p.add_argument("--baseline", action="append", default=None,
                   choices=_BASELINES, help="baseline(s) to evaluate (repeatable)")
    p.add_argument("--iterations-camera", type=int, default=None, dest="iterations_camera")
    p.add_argument("--iterations-deform", type=int, default=None, dest="iterations_deform")
    p.add_argument("--iterations-ba", type=int, default=None, dest="iterations_ba")
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export", help="re-export artifacts from a saved alignment")
    p.add_argument("--scene", required=True)
    p.add_argument("--state", required=True, help="state.npz written by align")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--cameras", type=int, default=5)
    p.add_argument("--points", type=int, default=24)
    p.add_argument("--width", type=int, default=400)
    p.add_argument("--height", type=int, default=300)
    p.add_argument("--texture", choices=("checkerboard", "gradient"),
                   default="checkerboard")
    p.add_argument("--delta", type=float, default=0.0,
                   help="inconsistency magnitude (fraction of image size)")
    p.add_argument("--depth-noise", type=float, default=0.0, dest="depth_noise")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate", help="check scene annotations, print a JSON report")
    p.add_argument("--scene", required=True)
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # noqa: BLE001 - single exit point for the CLI
        message = " ".join(str(err).split()) or err.__class__.__name__
        print(f"error: {_error_module(err)}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
