"""Command-line front end: synth, run, eval, study, bench.

Exit codes: 0 success, 2 config/usage problems, 3 I/O problems, 4 runtime
pipeline failure. All non-timing outputs are deterministic given the same
seed and configuration.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import dataset, pipeline, synth
from .correction import CorrectionConfig
from .errors import (
    DecodeError,
    MalformedManifestError,
    MissingFrameFileError,
    MissingManifestError,
    RequiresGroundTruthError,
    VoxDepthError,
)
from .fusion import FusionConfig
from .metrics import hole_psnr_curve, hole_ratio, masked_rmse, mean_psnr, psnr
from .odometry import OdometryConfig
from .pipeline import PipelineConfig, run_baseline, run_sequence
from .pointcloud import VoxelGridSpec
from .registration import RegistrationConfig
from .synth import NoiseSpec, SceneSpec
from .types import CameraIntrinsics

METHODS = ("voxdepth", "leftfill", "bilinear-template", "none")


class ConfigArgError(VoxDepthError):
    """Bad configuration or usage; maps to exit code 2."""


def default_pipeline_dict() -> dict:
    return {
        "fusion": {
            "window": 10,
            "grid_size": 256,
            "voxel_size": 0.05,
            "dilation_window": 5,
            "inpaint_method": "dilate",
            "max_inpaint_passes": 3,
            "target_valid_ratio": 0.99,
            "reestimate_motion": False,
        },
        "registration": {
            "work_size": 200,
            "fast_threshold": 12,
            "max_features": 500,
            "match_distance_threshold": 20,
            "ransac_iterations": 200,
            "inlier_radius": 3.0,
            "min_good_matches_for_affine": 3,
            "seed": 7,
        },
        "correction": {
            "median_window": 5,
            "invalid_low_factor": 0.5,
            "treat_greater_as_invalid": True,
            "greater_tolerance": 0.0,
        },
        "odometry": {
            "pyramid_levels": 3,
            "max_iterations": 10,
            "convergence_epsilon": 1e-6,
            "min_valid_pixels": 500,
        },
        "good_match_switch_threshold": 5,
        "stage_queue_capacity": 2,
        "pipelined": False,
    }


def pipeline_from_dict(d: dict) -> PipelineConfig:
    try:
        f = d["fusion"]
        size = float(f["voxel_size"])
        return PipelineConfig(
            fusion=FusionConfig(
                window=int(f["window"]),
                grid=VoxelGridSpec(int(f["grid_size"]), size, size, size),
                dilation_window=int(f["dilation_window"]),
                inpaint_method=str(f["inpaint_method"]),
                max_inpaint_passes=int(f["max_inpaint_passes"]),
                target_valid_ratio=float(f["target_valid_ratio"]),
                reestimate_motion=bool(f["reestimate_motion"]),
            ),
            registration=RegistrationConfig(**d["registration"]),
            correction=CorrectionConfig(**d["correction"]),
            odometry=OdometryConfig(**d["odometry"]),
            good_match_switch_threshold=int(d["good_match_switch_threshold"]),
            stage_queue_capacity=int(d["stage_queue_capacity"]),
            pipelined=bool(d["pipelined"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigArgError(f"invalid pipeline configuration: {exc}") from exc


def scene_from_dict(d: dict) -> tuple[SceneSpec, NoiseSpec]:
    try:
        s = d["scene"]
        intr = s["intrinsics"]
        intrinsics = CameraIntrinsics(
            fx=float(intr["fx"]),
            fy=float(intr["fy"]),
            cx=float(intr["cx"]),
            cy=float(intr["cy"]),
            baseline=float(intr.get("baseline_m", 0.0)),
        )
        primitives = []
        for p in s.get("primitives", []):
            kind = p["kind"]
            if kind == "box":
                primitives.append(
                    synth.Box(tuple(p["center"]), tuple(p["size"]),
                              int(p.get("albedo", 1)))
                )
            elif kind == "sphere":
                primitives.append(
                    synth.Sphere(tuple(p["center"]), float(p["radius"]),
                                 int(p.get("albedo", 2)))
                )
            else:
                raise ConfigArgError(f"unknown primitive kind '{kind}'")
        motion = s.get("motion", {})
        angular = np.deg2rad(motion.get("angular_velocity_deg", [0, 0, 0]))
        trajectory = synth.linear_trajectory(
            int(s["frames"]),
            velocity=motion.get("velocity", [0, 0, 0]),
            angular_velocity=angular,
        )
        spec = SceneSpec(
            primitives=primitives,
            trajectory=trajectory,
            width=int(s["width"]),
            height=int(s["height"]),
            intrinsics=intrinsics,
            background_depth=s.get("background_depth"),
            texture_cell=float(s.get("texture_cell", 0.25)),
            seed=int(s.get("seed", 0)),
        )
        noise = NoiseSpec(**d.get("noise", {}))
        return spec, noise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigArgError(f"invalid scene configuration: {exc}") from exc


def complete_scene_config(cfg: dict) -> dict:
    """Fill optional scene/noise keys with defaults so --set can target any
    schema key, present in the file or not."""
    out = copy.deepcopy(cfg)
    noise_defaults = {
        "flicker_fraction": 0.0,
        "hole_mode": "geometric",
        "blob_fraction": 0.0,
        "theta": 0.0,
        "seed": 0,
    }
    out["noise"] = {**noise_defaults, **out.get("noise", {})}
    scene = out.setdefault("scene", {})
    scene.setdefault("texture_cell", 0.25)
    scene.setdefault("seed", 0)
    scene.setdefault("background_depth", None)
    motion = scene.setdefault("motion", {})
    motion.setdefault("velocity", [0.0, 0.0, 0.0])
    motion.setdefault("angular_velocity_deg", [0.0, 0.0, 0.0])
    return out


def load_config_file(path: str) -> dict:
    """Load a JSON config from disk, falling back to the bundled scenes."""
    p = Path(path)
    if p.is_file():
        return json.loads(p.read_text())
    candidate = resources.files("voxdepth") / "scenes" / Path(path).name
    if candidate.is_file():
        return json.loads(candidate.read_text())
    raise ConfigArgError(f"config file not found: {path}")


def apply_overrides(cfg: dict, pairs: list[str]) -> dict:
    """Apply repeatable --set key.path=value flags onto a nested dict."""
    out = copy.deepcopy(cfg)
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigArgError(f"--set expects key=value, got '{pair}'")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigArgError(f"--set references unknown key '{key}'")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigArgError(f"--set references unknown key '{key}'")
        node[parts[-1]] = value
    return out


def _print_config(cfg: dict) -> int:
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    if not args.config:
        raise ConfigArgError("synth requires --config with a scene description")
    cfg = apply_overrides(load_config_file(args.config), args.set)
    if args.seed is not None:
        cfg.setdefault("scene", {})["seed"] = args.seed
        cfg.setdefault("noise", {})["seed"] = args.seed
    if args.print_config:
        return _print_config(cfg)
    if not args.output:
        raise ConfigArgError("synth requires --output")
    spec, noise = scene_from_dict(cfg)
    manifest = synth.generate_dataset(args.output, spec, noise)
    ratios = [
        hole_ratio(manifest.read_frame(i).depth)
        for i in range(manifest.frame_count)
    ]
    print(
        f"wrote {manifest.frame_count} frames to {manifest.root} "
        f"(mean hole ratio {float(np.mean(ratios)):.4f})"
    )
    return 0


def _write_run_outputs(out_dir: Path, report, cfg_dict, method: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    if metrics_path.exists():
        metrics_path.unlink()
    for row in report.rows:
        dataset.append_metrics(metrics_path, row)
    payload = {
        "method": method,
        "config": cfg_dict,
        "frames": report.frames,
        "throughput_fps": report.throughput_fps,
        "switches": report.switch_log,
        "stage_stats": report.stage_stats(),
        "mean_psnr": report.mean_metric("psnr"),
        "mean_masked_rmse": report.mean_metric("masked_rmse"),
    }
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2))


def cmd_run(args) -> int:
    cfg_dict = default_pipeline_dict()
    if args.config:
        cfg_dict.update(load_config_file(args.config))
    cfg_dict = apply_overrides(cfg_dict, args.set)
    if args.seed is not None:
        cfg_dict["registration"]["seed"] = args.seed
    if args.pipelined is not None:
        cfg_dict["pipelined"] = args.pipelined == "true"
    if args.method not in METHODS:
        raise ConfigArgError(f"--method must be one of {METHODS}")
    if args.print_config:
        return _print_config(cfg_dict)
    if not args.input or not args.output:
        raise ConfigArgError("run requires --input and --output")

    manifest = dataset.load_sequence(args.input)
    cfg = pipeline_from_dict(cfg_dict)
    if args.method == "bilinear-template":
        cfg = replace(cfg, fusion=replace(cfg.fusion, inpaint_method="bilinear"))

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    def writer(index, img):
        dataset.write_depth(out_dir / f"corrected_{index:06d}.png", img)

    if args.method in ("none", "leftfill"):
        report = run_baseline(manifest, args.method, keep_outputs=True)
        for i, img in enumerate(report.outputs):
            writer(i, img)
        report.outputs = None
    else:
        report = run_sequence(
            manifest, cfg, keep_outputs=False, on_output=writer
        )
    _write_run_outputs(out_dir, report, cfg_dict, args.method)
    mean = report.mean_metric("psnr")
    extra = "" if mean is None or math.isnan(mean) else f", mean PSNR {mean:.2f} dB"
    print(
        f"{args.method}: {report.frames} frames at "
        f"{report.throughput_fps:.2f} fps, {report.switches} switches{extra}"
    )
    return 0


def cmd_eval(args) -> int:
    if not args.input or not args.output:
        raise ConfigArgError("eval requires --input and --output")
    manifest = dataset.load_sequence(args.input)
    if not manifest.has_ground_truth:
        raise ConfigArgError("eval requires a dataset with ground-truth depth")
    if args.masked_rmse and not manifest.has_hole_masks:
        raise ConfigArgError("--masked-rmse requires hole-mask files")

    pred_dir = Path(args.pred) if args.pred else None
    out_path = Path(args.output)
    if out_path.exists():
        out_path.unlink()
    psnrs, rmses, holes = [], [], []
    for i in range(manifest.frame_count):
        if pred_dir is not None:
            pred = dataset.read_depth(pred_dir / f"corrected_{i:06d}.png")
        else:
            pred = manifest.read_frame(i).depth
        gt = manifest.read_ground_truth(i)
        row = {
            "frame": i,
            "psnr": psnr(pred, gt),
            "hole_ratio": hole_ratio(pred),
        }
        if args.masked_rmse:
            mask = manifest.read_hole_mask(i)
            row["masked_rmse"] = masked_rmse(pred, gt, mask) if mask.any() else None
            if row["masked_rmse"] is not None:
                rmses.append(row["masked_rmse"])
        psnrs.append(row["psnr"])
        holes.append(row["hole_ratio"])
        dataset.append_metrics(out_path, row)
    summary = {
        "frame": "mean",
        "psnr": mean_psnr(psnrs),
        "hole_ratio": float(np.mean(holes)),
    }
    if args.masked_rmse:
        summary["masked_rmse"] = float(np.mean(rmses)) if rmses else None
    dataset.append_metrics(out_path, summary)
    print(f"evaluated {manifest.frame_count} frames -> {out_path}")
    return 0


def _parse_int_list(raw: str) -> list:
    out = []
    for tok in raw.split(","):
        tok = tok.strip()
        if tok in ("inf", "Infinity"):
            out.append(math.inf)
        else:
            out.append(int(tok))
    return out


def cmd_study(args) -> int:
    if not args.input or not args.output:
        raise ConfigArgError("study requires --input and --output")
    manifest = dataset.load_sequence(args.input)
    if not manifest.has_ground_truth:
        raise ConfigArgError("study requires a dataset with ground-truth depth")
    cfg_dict = default_pipeline_dict()
    if args.config:
        cfg_dict.update(load_config_file(args.config))
    cfg_dict = apply_overrides(cfg_dict, args.set)
    cfg = pipeline_from_dict(cfg_dict)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    freqs = _parse_int_list(args.frequencies)
    path = out_dir / "fusion_frequency.csv"
    path.unlink(missing_ok=True)
    for k, value in pipeline.sweep_fusion_frequency(manifest, cfg, freqs):
        dataset.append_metrics(path, {"frequency": k, "mean_psnr": value})

    windows = _parse_int_list(args.windows)
    path = out_dir / "init_window.csv"
    path.unlink(missing_ok=True)
    for size, value in pipeline.sweep_init_window(manifest, cfg, windows):
        dataset.append_metrics(path, {"window": size, "mean_psnr": value})

    pairs = (
        (manifest.read_frame(i).depth, manifest.read_ground_truth(i))
        for i in range(manifest.frame_count)
    )
    path = out_dir / "hole_curve.csv"
    path.unlink(missing_ok=True)
    for edge, value, count in hole_psnr_curve(pairs):
        dataset.append_metrics(
            path, {"hole_ratio_bucket": edge, "mean_raw_psnr": value,
                   "frames": count}
        )

    sizes = _parse_int_list(args.work_sizes)
    path = out_dir / "resize_sweep.csv"
    path.unlink(missing_ok=True)
    for size, quality, latency in pipeline.resize_sweep(manifest, cfg, sizes):
        dataset.append_metrics(
            path,
            {"work_size": size, "mean_psnr": quality, "mean_latency_ms": latency},
        )

    print(f"study tables written to {out_dir}")
    return 0


_BENCH_COMPONENTS = (
    ("Fusion", "fusion"),
    ("Inpainting", "inpaint"),
    ("Transform", "transform"),
    ("Combine", "combine"),
)


def cmd_bench(args) -> int:
    if not args.input:
        raise ConfigArgError("bench requires --input")
    manifest = dataset.load_sequence(args.input)
    cfg_dict = default_pipeline_dict()
    if args.config:
        cfg_dict.update(load_config_file(args.config))
    cfg_dict = apply_overrides(cfg_dict, args.set)
    if args.pipelined is not None:
        cfg_dict["pipelined"] = args.pipelined == "true"
    cfg = pipeline_from_dict(cfg_dict)
    report = run_sequence(manifest, cfg, keep_outputs=False,
                          collect_metrics=False)
    stats = report.stage_stats()
    components = {}
    for label, key in _BENCH_COMPONENTS:
        entry = stats.get(key, {"count": 0, "mean_ms": 0.0, "p95_ms": 0.0})
        components[label] = entry
        print(
            f"{label:<11} mean {entry['mean_ms']:8.2f} ms   "
            f"p95 {entry['p95_ms']:8.2f} ms   n={entry['count']}"
        )
    payload = {
        "components": components,
        "total": {
            "frames": report.frames,
            "throughput_fps": report.throughput_fps,
            "switches": report.switches,
        },
    }
    print(f"Total       {report.frames} frames at {report.throughput_fps:.2f} fps")
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(json.dumps(payload, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxdepth",
        description="Rectify noisy 16-bit depth image sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_method=False):
        p.add_argument("--input", help="input dataset directory")
        p.add_argument("--output", help="output directory or file")
        p.add_argument("--config", help="JSON config file (bundled scenes ok)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--print-config", action="store_true",
                       help="print the merged config and exit")
        if with_method:
            p.add_argument("--method", default="voxdepth", choices=METHODS)
            p.add_argument("--pipelined", choices=("true", "false"),
                           default=None)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="rectify a sequence")
    common(p, with_method=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    common(p)
    p.add_argument("--pred", help="directory with corrected_%%06d.png "
                                  "(defaults to the raw input depth)")
    p.add_argument("--masked-rmse", action="store_true",
                   help="also compute RMSE over the occlusion-hole masks")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("study", help="run the sweep studies")
    common(p)
    p.add_argument("--frequencies", default="10,25,50,100,inf")
    p.add_argument("--windows", default="1,2,5,10")
    p.add_argument("--work-sizes", default="100,150,200,300,400")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("bench", help="measure per-component latency")
    common(p)
    p.add_argument("--pipelined", choices=("true", "false"), default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigArgError,
        MissingManifestError,
        MalformedManifestError,
        RequiresGroundTruthError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, DecodeError, MissingFrameFileError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (VoxDepthError, ValueError, RuntimeError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
