"""Command-line front door.

Subcommands compose the library into reproducible runs: every command is
deterministic under a fixed --seed and writes a manifest (resolved
configuration, input hashes, per-stage timings) alongside its outputs.
"""

import argparse
import hashlib
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels, coding, diffusion, evaluation, harmonization
from . import io_formats as iof
from .errors import ConfigError, FlowHarmonyError


def _hash_path(path):
    path = Path(path)
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _write_manifest(target, command, params, inputs, timings, seed):
    lines = [
        f"tool_version={__version__}",
        f"backend={_kernels.BACKEND}",
        f"command={command}",
        f"seed={seed}",
    ]
    for k in sorted(params):
        lines.append(f"param.{k}={params[k]}")
    for k in sorted(inputs):
        lines.append(f"input.{k}.path={inputs[k]}")
        lines.append(f"input.{k}.sha256={_hash_path(inputs[k])}")
    for name, dt in timings:
        lines.append(f"timing.{name}_s={dt:.6f}")
    target = Path(target)
    manifest = target / "manifest.txt" if target.is_dir() else target.with_suffix(
        target.suffix + ".manifest"
    )
    manifest.write_text("\n".join(lines) + "\n")


class _Timer:
    def __init__(self):
        self.stages = []

    def stage(self, name):
        return _Stage(self, name)


class _Stage:
    def __init__(self, timer, name):
        self.timer, self.name = timer, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.timer.stages.append((self.name, time.perf_counter() - self.t0))


def _merge_config(args):
    """File config provides defaults; explicit flags win."""
    cfg = iof.read_config(args.config) if getattr(args, "config", None) else iof.RunConfig()
    for name in ("w", "steps", "start_fraction", "mode", "harmonizer",
                 "kernel_length", "sigma_seed", "seed"):
        v = getattr(args, name.replace("-", "_"), None)
        if v is not None:
            setattr(cfg, name, v)
    direction = getattr(args, "direction", None)
    if direction is not None:
        cfg.flow_direction = direction
    return cfg


def _load_occlusions(path, frames, height, width):
    if path is None:
        return coding.OcclusionMask.none(frames, height, width)
    return iof.read_masks(path)


def cmd_encode(args):
    timer = _Timer()
    cfg = _merge_config(args)
    with timer.stage("read"):
        flow = iof.read_flow_dir(args.flows, direction=cfg.flow_direction)
        occ = _load_occlusions(args.occlusions, flow.frames, *flow.spatial_shape)
    with timer.stage("encode"):
        if args.distant:
            if args.gap is None:
                raise ConfigError("--distant requires --gap")
            flow_d = iof.read_flow_dir(args.distant, direction=cfg.flow_direction)
            occ_d = _load_occlusions(args.distant_occlusions, flow_d.frames,
                                     *flow_d.spatial_shape)
            enc = coding.flow_code_distant(flow, occ, flow_d, occ_d, args.gap)
        else:
            enc = coding.flow_code(flow, occ)
    with timer.stage("write"):
        iof.write_codes(args.out, enc)
    report = coding.validate_codes(enc)
    print(f"n={enc.n}")
    print(f"valid={'pass' if report.ok else 'fail'}")
    for issue in report.issues:
        print(f"issue={issue}")
    inputs = {"flows": args.flows}
    if args.occlusions:
        inputs["occlusions"] = args.occlusions
    if args.distant:
        inputs["distant"] = args.distant
    _write_manifest(args.out, "encode",
                    {"direction": cfg.flow_direction, "gap": args.gap},
                    inputs, timer.stages, cfg.seed)
    return 0


def _resolve_kernel(cfg):
    if cfg.sigma_seed is None:
        return harmonization.flat_kernel(cfg.kernel_length)
    return harmonization.gaussian_kernel(cfg.kernel_length, cfg.sigma)


def cmd_harmonize(args):
    timer = _Timer()
    cfg = _merge_config(args)
    with timer.stage("read"):
        enc = iof.load_codes(args.codes)
        if args.video_tensor:
            video = iof.read_tensor(args.video_tensor).astype(np.float64)
        else:
            video = iof.read_frames(args.video)
    with timer.stage("harmonize"):
        harmonized, repo = harmonization.harmonize_global(video, enc)
        if cfg.harmonizer == "local":
            inv = harmonization.build_inverse_repository(enc)
            harmonized = harmonization.harmonize_local(video, inv, _resolve_kernel(cfg))
    loss_before = harmonization.consistency_loss(video, repo, enc)
    _, repo_after = harmonization.harmonize_global(harmonized, enc)
    loss_after = harmonization.consistency_loss(harmonized, repo_after, enc)
    with timer.stage("write"):
        if args.out_tensor:
            iof.write_tensor(args.out_tensor, harmonized)
            target = args.out_tensor
        else:
            iof.write_frames(args.out, harmonized)
            target = args.out
    print(f"loss_before={loss_before:.6f}")
    print(f"loss_after={loss_after:.6f}")
    inputs = {"codes": args.codes,
              "video": args.video_tensor or args.video}
    _write_manifest(target, "harmonize",
                    {"harmonizer": cfg.harmonizer,
                     "kernel_length": cfg.kernel_length,
                     "sigma_seed": cfg.sigma_seed},
                    inputs, timer.stages, cfg.seed)
    return 0


def _parse_model(spec_str, sched):
    parts = spec_str.split(":")
    kind = parts[0]
    if kind == "oracle" and len(parts) == 2:
        target = iof.read_frames(parts[1])
        return diffusion.ExactNoiseOracle(target=target, sched=sched), parts[1], target
    if kind == "noisy-oracle" and len(parts) in (2, 3):
        target = iof.read_frames(parts[1])
        scale = float(parts[2]) if len(parts) == 3 else 0.5
        return (diffusion.NoisyOracle(target=target, sched=sched, noise_scale=scale),
                parts[1], target)
    raise ConfigError(
        f"unknown model spec {spec_str!r}; expected oracle:DIR or noisy-oracle:DIR[:SCALE]"
    )


def _make_autoencoder(name):
    if name == "identity":
        return diffusion.IdentityAutoencoder()
    if name == "avgpool2":
        return diffusion.AvgPoolAutoencoder()
    raise ConfigError(f"unknown autoencoder {name!r}")


def _run_generate(model, enc, gcfg, sched, target, seed, ae):
    t_start = math.ceil(gcfg.start_fraction * sched.T)
    source = target if gcfg.mode != diffusion.LATENT else ae.encode(target)
    if gcfg.start_fraction < 1.0:
        init = diffusion.add_noise(source, t_start, sched,
                                   diffusion.pure_noise(source.shape, seed))
    else:
        init = diffusion.pure_noise(source.shape, seed)
    if gcfg.mode == diffusion.LATENT:
        model = _LatentModel(model, ae)
    return diffusion.generate(model, enc, gcfg, sched, init, seed=seed, ae=ae)


class _LatentModel:
    """Wrap an observation-space oracle to operate on encoded targets."""

    def __init__(self, inner, ae):
        self.inner = inner
        self.target = ae.encode(inner.target)
        self.sched = inner.sched

    def evaluate(self, x_t, t, conditioning=None):
        ab = self.sched._check_t(t)
        if ab >= 1.0:
            return np.zeros_like(x_t)
        base = (x_t - math.sqrt(ab) * self.target) / math.sqrt(1.0 - ab)
        scale = getattr(self.inner, "noise_scale", None)
        if scale:
            rng = np.random.default_rng((self.inner.seed, int(t)))
            base = base + scale * rng.standard_normal(x_t.shape)
        return base


def cmd_generate(args):
    timer = _Timer()
    cfg = _merge_config(args)
    sched = diffusion.NoiseSchedule.linear()
    with timer.stage("read"):
        enc = iof.load_codes(args.codes)
        model, target_dir, target = _parse_model(args.model, sched)
    kernel = _resolve_kernel(cfg) if cfg.harmonizer == "local" else None
    ae = _make_autoencoder(args.autoencoder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ws = ([round(0.1 * k, 1) for k in range(11)] if args.w_sweep else [cfg.w])
    table = []
    video = None
    with timer.stage("generate"):
        for w in ws:
            gcfg = diffusion.GuidanceConfig(
                w=w, mode=cfg.mode, harmonizer=cfg.harmonizer, kernel=kernel,
                steps=cfg.steps, start_fraction=cfg.start_fraction,
            )
            video = _run_generate(model, enc, gcfg, sched, target, cfg.seed, ae)
            table.append((w, video))
    with timer.stage("write"):
        iof.write_frames(out, video)
    if args.w_sweep:
        print("w\twarp_error")
        zero_occ = coding.OcclusionMask.none(enc.frames, *enc.spatial_shape)
        flows = _codes_free_flows(args)
        for w, vid in table:
            if flows is not None:
                err = evaluation.warp_error(vid, flows, zero_occ).mean_abs_error
                print(f"{w}\t{err:.6f}")
    _write_manifest(out, "generate",
                    {"model": args.model, "w": cfg.w, "steps": cfg.steps,
                     "start_fraction": cfg.start_fraction, "mode": cfg.mode,
                     "harmonizer": cfg.harmonizer, "w_sweep": args.w_sweep},
                    {"codes": args.codes, "target": target_dir},
                    timer.stages, cfg.seed)
    return 0


def _codes_free_flows(args):
    if getattr(args, "gt_flows", None):
        return iof.read_flow_dir(args.gt_flows)
    return None


def cmd_evaluate(args):
    timer = _Timer()
    with timer.stage("read"):
        video = iof.read_frames(args.video)
    lines = []
    with timer.stage("evaluate"):
        est = evaluation.block_matching_flow(video, args.radius, args.patch)
        if args.gt_flows:
            gt = iof.read_flow_dir(args.gt_flows)
            mask = iof.read_masks(args.occlusions) if args.occlusions else None
            report = evaluation.endpoint_error(est, gt, mask)
            lines += report.lines()
            occ = mask or coding.OcclusionMask.none(video.shape[0], *video.shape[2:])
            lines += evaluation.warp_error(video, gt, occ).lines()
    for line in lines:
        print(line)
    if args.report:
        Path(args.report).write_text("\n".join(lines) + "\n")
        _write_manifest(args.report, "evaluate",
                        {"radius": args.radius, "patch": args.patch},
                        {"video": args.video}, timer.stages, args.seed or 0)
    return 0


def cmd_scan(args):
    timer = _Timer()
    with timer.stage("read"):
        video = iof.read_frames(args.video)
    column = args.column
    if column is None:
        column = max(0, video.shape[3] - args.width)
    with timer.stage("scan"):
        image = evaluation.horizontal_scan(video, column, args.width, args.shift)
    with timer.stage("write"):
        iof.write_image(args.out, image)
    _write_manifest(args.out, "scan",
                    {"column": column, "width": args.width, "shift": args.shift},
                    {"video": args.video}, timer.stages, args.seed or 0)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowharmony",
        description="Temporal consistency for video frames via trajectory "
                    "coding and harmonization",
    )
    parser.add_argument("--version", action="version", version=__version__)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap (kernels are currently single-threaded)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="flows + occlusions -> trajectory codes")
    p.add_argument("--flows", required=True)
    p.add_argument("--occlusions")
    p.add_argument("--direction", choices=[coding.FORWARD, coding.BACKWARD])
    p.add_argument("--distant", help="distant-frame flow directory")
    p.add_argument("--distant-occlusions")
    p.add_argument("--gap", type=int, help="frame gap d for distant flows")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("harmonize", help="average or smooth pixels along trajectories")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--video", help="frame directory")
    src.add_argument("--video-tensor", help="(T, C, H, W) tensor container")
    p.add_argument("--codes", required=True)
    p.add_argument("--harmonizer", choices=["global", "local"])
    p.add_argument("--kernel-length", type=int)
    p.add_argument("--sigma-seed", type=float)
    dst = p.add_mutually_exclusive_group(required=True)
    dst.add_argument("--out", help="output frame directory")
    dst.add_argument("--out-tensor", help="output tensor container")
    common(p)
    p.set_defaults(func=cmd_harmonize)

    p = sub.add_parser("generate", help="guided deterministic denoising run")
    p.add_argument("--model", required=True,
                   help="oracle:TARGETDIR or noisy-oracle:TARGETDIR[:SCALE]")
    p.add_argument("--codes", required=True)
    p.add_argument("--w", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--start-fraction", type=float, dest="start_fraction")
    p.add_argument("--mode", choices=list(diffusion.MODES))
    p.add_argument("--harmonizer", choices=["global", "local"])
    p.add_argument("--kernel-length", type=int)
    p.add_argument("--sigma-seed", type=float)
    p.add_argument("--autoencoder", choices=["identity", "avgpool2"],
                   default="identity")
    p.add_argument("--w-sweep", action="store_true",
                   help="run w in {0, 0.1, ..., 1.0} and print a metric table")
    p.add_argument("--gt-flows", help="flows for the sweep metric table")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="flow-based consistency metrics")
    p.add_argument("--video", required=True)
    p.add_argument("--gt-flows")
    p.add_argument("--occlusions")
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--patch", type=int, default=3)
    p.add_argument("--report", help="write the key=value report to this file")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("scan", help="horizontal-scan strip diagnostic image")
    p.add_argument("--video", required=True)
    p.add_argument("--column", type=int, default=None)
    p.add_argument("--width", type=int, default=20)
    p.add_argument("--shift", type=int, default=0)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_scan)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlowHarmonyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
