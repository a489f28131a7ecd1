"""Command-line interface.

Subcommands cover trajectory annotation (quantize, speed-stats), sampling
experiments (sample, aam-demo), and planning utilities (framepack-plan,
cache-profile). Every run that writes an output file also writes
``<out>.manifest.json`` recording the command, config path, seed, output
directory, and tool version; identical invocations produce byte-identical
outputs and manifests.

Exit codes: 0 success, 2 malformed input, 3 validation failure, 4 internal
error. Failures print one machine-readable JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .blocks import CachePlan, ToyBlockStack, block_importance_scores, select_cacheable_layers
from .errors import InputParseError, ValidationError, YumeKitError
from .experiments import run_sampling_experiment
from .flow import GaussianMixture, MixtureComponent, OracleVelocity
from .framepack import framepack_plan
from .freqops import build_operator
from .motion import annotate_trajectory, load_trajectory, motion_set_from_dict, speed_stats
from .samplers import CfgVelocity, NfeCounter, TimeSchedule, aam_sample, euler_ode_sample
from .se3 import Se3DistanceWeights


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"invalid JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise InputParseError(f"cannot read {path}: {exc}") from exc


def _dump_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_output(payload: dict, args: argparse.Namespace, command: str) -> None:
    if getattr(args, "out", None):
        out_path = args.out
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(_dump_json(payload))
        manifest = {
            "command": command,
            "config": getattr(args, "config", None),
            "seed": getattr(args, "seed", None),
            "output_dir": os.path.dirname(os.path.abspath(out_path)),
            "tool_version": __version__,
        }
        with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(_dump_json(manifest))


def _emit(payload: dict, args: argparse.Namespace, command: str, table: str | None = None) -> int:
    _write_output(payload, args, command)
    if getattr(args, "format", "json") == "table" and table is not None:
        print(table)
    else:
        sys.stdout.write(_dump_json(payload))
    return 0


# -- subcommands -----------------------------------------------------------------


def cmd_quantize(args: argparse.Namespace) -> int:
    config = _load_json(args.config) if args.config else {}
    motion_set = motion_set_from_dict(config) if config else None
    weights = config.get("weights") if isinstance(config, dict) else None
    kwargs = {}
    if weights:
        kwargs["weights"] = Se3DistanceWeights(
            translation=float(weights.get("translation", 1.0)),
            rotation=float(weights.get("rotation", 1.0)),
        )
    if "min_segment" in config:
        kwargs["min_segment"] = int(config["min_segment"])
    if "jitter_angle" in config:
        kwargs["jitter_angle"] = float(config["jitter_angle"])
    fps, poses = load_trajectory(args.trajectory)
    annotation = annotate_trajectory(
        poses, motion_set, stride=args.stride, **kwargs
    )
    payload = annotation.to_dict()
    payload["fps"] = fps
    payload["n_poses"] = len(poses)
    labels = payload["labels"]
    lines = [f"{'segment':>8}  {'motion':<32}  {'distance':>12}"]
    for lab in labels:
        lines.append(
            f"{lab['segment_index']:>8}  {lab['motion']:<32}  "
            f"{lab['distance_to_canonical']:>12.6f}"
        )
    lines.append(f"jitter score: {payload['jitter_score']:.4f}")
    return _emit(payload, args, "quantize", table="\n".join(lines))


def cmd_speed_stats(args: argparse.Namespace) -> int:
    fps, poses = load_trajectory(args.trajectory)
    stats = speed_stats(poses)
    payload = {
        "fps": fps,
        "n_poses": len(poses),
        "translations": stats.translations.tolist(),
        "direction_angles": stats.direction_angles.tolist(),
        "rotation_angles": stats.rotation_angles.tolist(),
        "mean_speed": stats.mean_speed(),
        "mean_rotation": stats.mean_rotation(),
    }
    table = (
        f"poses: {len(poses)}\n"
        f"mean speed: {stats.mean_speed():.6f}\n"
        f"mean rotation: {stats.mean_rotation():.6f}"
    )
    return _emit(payload, args, "speed-stats", table=table)


def cmd_sample(args: argparse.Namespace) -> int:
    config = _load_json(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    result = run_sampling_experiment(config, base_dir=os.path.dirname(os.path.abspath(args.config)))
    if not args.keep_samples:
        result.pop("samples")
    table = (
        f"sampler: {result['sampler']}\n"
        f"samples: {result['n_samples']}  nfe: {result['nfe']}\n"
        f"mean deviation: {result['mean_abs_deviation']:.6f}\n"
        f"max frequency deviation: {result['max_frequency_deviation']:.6f}"
    )
    return _emit(result, args, "sample", table=table)


def cmd_framepack_plan(args: argparse.Namespace) -> int:
    if args.config:
        config = _load_json(args.config)
        history = int(config["history_len"])
        h = int(config["latent_height"])
        w = int(config["latent_width"])
        draft = config.get("variant", "final") == "draft"
    else:
        if args.history_len is None or args.latent_h is None or args.latent_w is None:
            raise InputParseError(
                "framepack-plan needs --history-len, --latent-h, --latent-w or --config"
            )
        history, h, w = args.history_len, args.latent_h, args.latent_w
        draft = args.variant == "draft"
    plan = framepack_plan(history, h, w, draft=draft)
    return _emit(plan.to_dict(), args, "framepack-plan", table=plan.table())


def cmd_cache_profile(args: argparse.Namespace) -> int:
    config = _load_json(args.config) if args.config else {}
    stack_seed = int(config.get("stack_seed", args.seed if args.seed is not None else 0))
    n_blocks = int(config.get("n_blocks", 40))
    dim = int(config.get("dim", 8))
    tokens = int(config.get("tokens", 16))
    timesteps = int(config.get("timesteps", 8))
    n_videos = int(config.get("n_videos", 4))
    interval = int(config.get("interval", 3))
    top_k = int(config.get("top_k", 10))
    stack = ToyBlockStack.seeded(n_blocks=n_blocks, dim=dim, seed=stack_seed)
    rng = np.random.default_rng(np.random.SeedSequence([stack_seed, 3]))
    videos = [
        [rng.standard_normal((tokens, dim)) for _ in range(timesteps)]
        for _ in range(n_videos)
    ]
    scores = block_importance_scores(stack, videos, interval)
    selected = select_cacheable_layers(scores, top_k)
    plan = CachePlan(cacheable_layers=frozenset(selected), interval=interval)
    payload = {
        "stack_seed": stack_seed,
        "n_blocks": n_blocks,
        "interval": interval,
        "scores": scores.tolist(),
        "selected_layers": selected,
        "precision": plan.precision,
    }
    order = sorted(range(len(scores)), key=lambda i: (scores[i], i))
    lines = [f"{'rank':>4}  {'block':>5}  {'score':>14}  cached"]
    for rank, idx in enumerate(order):
        flag = "yes" if idx in plan.cacheable_layers else ""
        lines.append(f"{rank:>4}  {idx:>5}  {scores[idx]:>14.6e}  {flag}")
    return _emit(payload, args, "cache-profile", table="\n".join(lines))


def _demo_mixture(operator, height: int, width: int, sigma: float) -> GaussianMixture:
    # Smooth synthetic target plus a checkerboard ripple pushed into the
    # operator's null space, so the low/high band split is visibly nonzero.
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij"
    )
    image = np.cos(2.0 * math.pi * yy) + 0.5 * np.cos(2.0 * math.pi * 2.0 * xx)
    ii, jj = np.indices((height, width))
    ripple = operator.null_space_project(np.where((ii + jj) % 2 == 0, 1.0, -1.0))
    rms = float(np.sqrt((ripple * ripple).mean()))
    if rms > 0.0:
        image = image + 0.3 * ripple / rms
    return GaussianMixture(
        [MixtureComponent(weight=1.0, mean=image.reshape(-1), cov=sigma * sigma)]
    )


def cmd_aam_demo(args: argparse.Namespace) -> int:
    config = _load_json(args.config) if args.config else {}
    height = int(config.get("height", 33))
    width = int(config.get("width", 49))
    steps1 = int(config.get("steps1", 30))
    steps2 = int(config.get("steps2", 30))
    refine = int(config.get("refine_steps", 5))
    sigma = float(config.get("sigma", 0.2))
    # The default zero-center kernel on an odd grid has a genuine null space
    # (the Nyquist mode), so the band split below is not vacuous.
    kernel_h = np.asarray(config.get("kernel_h", [0.5, 0.0, 0.5]), dtype=float)
    kernel_w = np.asarray(config.get("kernel_w", [0.5, 0.0, 0.5]), dtype=float)
    seed = args.seed if args.seed is not None else 0

    operator = build_operator(kernel_h, kernel_w, height, width)
    mix = _demo_mixture(operator, height, width, sigma)
    velocity = OracleVelocity(mix, latent_shape=(height, width))
    # Refinement stage runs guided (cond == uncond here), doubling its per-step cost.
    guided = CfgVelocity(cond=velocity, uncond=velocity, scale=1.0)
    schedule1 = TimeSchedule.uniform(steps1)
    schedule2 = TimeSchedule.uniform(steps2)
    z_noise = np.random.default_rng(np.random.SeedSequence([seed, 0])).standard_normal(
        (height, width)
    )

    stage1_counter = NfeCounter()
    stage1 = euler_ode_sample(velocity, schedule1, z_noise, stage1_counter)
    counter = NfeCounter()
    final = aam_sample(
        velocity, guided, schedule1, schedule2, operator, refine, z_noise, counter
    )

    def band_energies(z: np.ndarray) -> dict:
        low = operator.low_pass(z)
        high = z - low
        return {
            "low_band_energy": float((low * low).mean()),
            "high_band_energy": float((high * high).mean()),
        }

    payload = {
        "height": height,
        "width": width,
        "seed": seed,
        "refine_steps": refine,
        "nfe": counter.count,
        "stage1": band_energies(stage1),
        "stage2": band_energies(final),
        "target": band_energies(mix.components[0].mean.reshape(height, width)),
    }
    table = (
        f"grid: {height}x{width}  refine steps: {refine}  nfe: {counter.count}\n"
        f"stage1 low/high band energy: "
        f"{payload['stage1']['low_band_energy']:.6f} / {payload['stage1']['high_band_energy']:.6f}\n"
        f"stage2 low/high band energy: "
        f"{payload['stage2']['low_band_energy']:.6f} / {payload['stage2']['high_band_energy']:.6f}"
    )
    return _emit(payload, args, "aam-demo", table=table)


# -- parser and entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="yume-kit",
        description="Trajectory quantization, sampling experiments, and context planning.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, config_help: str) -> None:
        p.add_argument("--config", help=config_help)
        p.add_argument("--out", help="write result JSON here (plus a manifest)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--format", choices=("json", "table"), default="json")

    p = sub.add_parser("quantize", help="label a camera trajectory with canonical motions")
    p.add_argument("trajectory", help="trajectory file (.json or .csv)")
    p.add_argument("--stride", type=int, default=1, help="pose downsampling stride")
    add_common(p, "motion set config JSON")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("speed-stats", help="displacement and angle statistics")
    p.add_argument("trajectory", help="trajectory file (.json or .csv)")
    add_common(p, "unused")
    p.set_defaults(func=cmd_speed_stats)

    p = sub.add_parser("sample", help="run a sampling experiment config")
    add_common(p, "experiment config JSON (required)")
    p.add_argument(
        "--keep-samples",
        action="store_true",
        help="include raw samples in the output payload",
    )
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("framepack-plan", help="context compression plan for a history")
    p.add_argument("--history-len", type=int)
    p.add_argument("--latent-h", type=int)
    p.add_argument("--latent-w", type=int)
    p.add_argument("--variant", choices=("final", "draft"), default="final")
    add_common(p, "plan config JSON with history_len/latent_height/latent_width")
    p.set_defaults(func=cmd_framepack_plan)

    p = sub.add_parser("cache-profile", help="rank blocks by importance on a toy stack")
    add_common(p, "profile config JSON")
    p.set_defaults(func=cmd_cache_profile)

    p = sub.add_parser("aam-demo", help="two-stage sampler demo on a smooth image target")
    add_common(p, "demo config JSON")
    p.set_defaults(func=cmd_aam_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sample" and not args.config:
        print(
            json.dumps({"error": "InputParseError", "message": "sample needs --config"}),
            file=sys.stderr,
        )
        return 2
    try:
        return args.func(args)
    except InputParseError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 3
    except YumeKitError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 4


def console_entry() -> None:
    sys.exit(main())
