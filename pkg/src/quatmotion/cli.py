"""Command-line interface: conversion, training, prediction, generation,
evaluation, baselines, and gradient checking.

Every run writes ``manifest.json`` (resolved config, package version,
seed) into the output directory before producing any other file. Exit
codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from . import evaluation as ev
from . import motiondata as md
from . import models as mo
from . import training as tr
from .autodiff import NumericalError
from .bvh import BvhParseError
from .kinematics import forward_kinematics

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def read_config(path) -> dict:
    """Plain key=value config, one pair per line, '#' comments."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected key=value", EXIT_USAGE)
                key, val = line.split("=", 1)
                out[key.strip()] = val.strip()
    except OSError as e:
        raise CliError(f"cannot read config: {e}", EXIT_USAGE)
    return out


def _coerce(raw: dict, defaults) -> dict:
    """Cast config strings onto a dataclass instance's field types."""
    out = {}
    for key, val in raw.items():
        if not hasattr(defaults, key):
            raise CliError(f"unknown config key {key!r}", EXIT_USAGE)
        cur = getattr(defaults, key)
        if isinstance(cur, bool):
            out[key] = val.lower() in ("1", "true", "yes")
        elif isinstance(cur, int):
            out[key] = int(val)
        elif isinstance(cur, float):
            out[key] = float(val)
        else:
            out[key] = val
    return out


def write_manifest(out_dir, args: argparse.Namespace, seed: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"version": __version__, "seed": seed,
                "config": {k: v for k, v in vars(args).items() if k != "func"}}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _load_clips(path) -> list:
    if not os.path.exists(path):
        raise CliError(f"dataset path {path!r} does not exist", EXIT_USAGE)
    try:
        if os.path.isdir(path):
            return md.load_dataset(path)
        if path.endswith(".bvh"):
            return [md.load_bvh(path)[1]]
        return [md.load_clip(path)]
    except BvhParseError as e:
        raise CliError(f"{path}: {e}", EXIT_DATA)
    except ValueError as e:
        raise CliError(str(e), EXIT_DATA)


def _load_swap_map(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# -- subcommands -----------------------------------------------------------------

def cmd_convert(args) -> int:
    write_manifest(args.out, args, args.seed)
    clips = _load_clips(args.input)
    if args.prune_tol is not None:
        skel = md.prune_constant_joints(clips[0].skeleton, clips, args.prune_tol)
        for c in clips:
            c.skeleton = skel
    if args.downsample > 1:
        clips = [p for c in clips for p in md.downsample_all_phases(c, args.downsample)]
    if args.mirror is not None:
        swap = _load_swap_map(args.mirror)
        clips = clips + [md.mirror(c, swap) for c in clips]
    if args.augment_rotations > 0:
        rng = np.random.default_rng(args.seed)
        clips = clips + [md.random_rotate(c, rng)
                         for _ in range(args.augment_rotations) for c in clips]
    if args.bvh:
        for i, c in enumerate(clips):
            md.save_bvh(os.path.join(args.out, f"clip_{i:05d}.bvh"), c)
    md.save_dataset(args.out, clips)
    skel = clips[0].skeleton
    print(f"wrote {len(clips)} clips, {sum(c.num_frames for c in clips)} frames, "
          f"{skel.num_active}/{skel.num_joints} active joints -> {args.out}")
    return EXIT_OK


def cmd_train_pose(args) -> int:
    raw = read_config(args.config) if args.config else {}
    dataset = raw.pop("dataset", args.dataset)
    preset = raw.pop("preset", args.preset)
    backbone = raw.pop("backbone", "recurrent")
    mode = raw.pop("mode", "velocity")
    parameterization = raw.pop("parameterization", "quaternion")
    config = tr.TrainConfig(**_coerce(raw, tr.TrainConfig()))
    if dataset is None:
        raise CliError("no dataset given (flag --dataset or config key)", EXIT_USAGE)
    write_manifest(args.out, args, config.seed)
    clips = _load_clips(dataset)
    skel = clips[0].skeleton

    resume = None
    if args.resume:
        ck = mo.load_checkpoint(args.resume)
        resume = tr.resume_state(ck)
        config = resume["train_config"]
        net = mo.pose_network_from_checkpoint(
            {"config": ck["config"], "arrays": resume["arrays"]})
    else:
        if preset == "desk":
            cfg = mo.PoseNetworkConfig.desk(skel.num_active, backbone=backbone,
                                            mode=mode, parameterization=parameterization)
        else:
            cfg = mo.PoseNetworkConfig(skel.num_active, backbone=backbone,
                                       mode=mode, parameterization=parameterization)
        net = mo.PoseNetwork(cfg, seed=config.seed)
    ck_path = os.path.join(args.out, "pose.ckpt")
    log_path = os.path.join(args.out, "training_log.csv")
    kwargs = {}
    if resume is not None:
        kwargs = {"start_epoch": resume["epoch"], "adam": resume["adam"],
                  "rng_state": resume["rng_state"]}
    try:
        tr.train_pose(net, clips, skel, config, log_path=log_path,
                      checkpoint_path=ck_path, **kwargs)
    except NumericalError as e:
        raise CliError(f"training aborted: {e}", EXIT_NUMERIC)
    print(f"checkpoint -> {ck_path}\nlog -> {log_path}")
    return EXIT_OK


def cmd_train_pace(args) -> int:
    raw = read_config(args.config) if args.config else {}
    dataset = raw.pop("dataset", args.dataset)
    variant = raw.pop("variant", "bidirectional")
    left = raw.pop("left_foot", args.left_foot)
    right = raw.pop("right_foot", args.right_foot)
    config = tr.TrainConfig(**_coerce(raw, tr.TrainConfig()))
    if dataset is None:
        raise CliError("no dataset given", EXIT_USAGE)
    write_manifest(args.out, args, config.seed)
    clips = _load_clips(dataset)
    skel = clips[0].skeleton
    try:
        li = skel.names.index(left)
        ri = skel.names.index(right)
    except ValueError as e:
        raise CliError(f"unknown foot joint: {e}", EXIT_DATA)
    examples = []
    for clip in clips:
        feats = md.extract_gait_features(clip, li, ri)
        if feats.degenerate:
            continue
        curv, targets, _ = tr.pace_training_example(clip, feats)
        examples.append((curv, targets))
    if not examples:
        raise CliError("no clip produced usable gait features", EXIT_DATA)
    net = mo.PaceNetwork(mo.PaceNetworkConfig(variant=variant), seed=config.seed)
    try:
        tr.train_pace(net, examples, config,
                      log_path=os.path.join(args.out, "training_log.csv"))
    except NumericalError as e:
        raise CliError(f"training aborted: {e}", EXIT_NUMERIC)
    ck = os.path.join(args.out, "pace.ckpt")
    mo.save_checkpoint(ck, "pace", {"variant": variant}, net.param_arrays(),
                       {"train_config": vars(config)})
    print(f"checkpoint -> {ck}")
    return EXIT_OK


def _load_pose_net(path) -> mo.PoseNetwork:
    ck = mo.load_checkpoint(path)
    if ck["kind"] != "pose":
        raise CliError(f"{path}: not a pose checkpoint", EXIT_USAGE)
    ck["arrays"] = {k: v for k, v in ck["arrays"].items()
                    if not k.startswith("adam.")}
    return mo.pose_network_from_checkpoint(ck)


def cmd_predict(args) -> int:
    write_manifest(args.out, args, args.seed)
    net = _load_pose_net(args.checkpoint)
    clips = _load_clips(args.dataset)
    skel = clips[0].skeleton
    if skel.num_active != net.config.num_joints:
        raise CliError("checkpoint and dataset skeletons are incompatible", EXIT_DATA)
    horizon = max(1, int(round(args.horizon_ms * clips[0].frame_rate / 1000.0)))
    n = args.conditioning_frames
    rows = []
    for ci, clip in enumerate(clips):
        if clip.num_frames < n + horizon:
            continue
        rots = clip.active_rotations
        pred = tr.free_run_predict(net, rots[:n], horizon)
        orders = [skel.euler_orders[a] for a in skel.active_indices]
        err = tr.euler_error(pred[-1][None], rots[n + horizon - 1][None], orders)[0]
        rows.append([ci, clip.action, args.horizon_ms, err])
        out_rot = clip.rotations[n:n + horizon].copy()
        out_rot[:, skel.active_indices] = pred
        out_clip = md.MotionClip(skel, clip.frame_rate,
                                 clip.root_positions[n:n + horizon], out_rot,
                                 clip.subject, clip.action + "_pred")
        md.save_clip(os.path.join(args.out, f"pred_{ci:05d}.qmc"), out_clip)
        if args.bvh:
            md.save_bvh(os.path.join(args.out, f"pred_{ci:05d}.bvh"), out_clip)
    with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip", "action", "horizon_ms", "euler_error"])
        w.writerows(rows)
    print(f"wrote {len(rows)} predictions -> {args.out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    write_manifest(args.out, args, args.seed)
    pose_net = _load_pose_net(args.pose_checkpoint)
    pace_ck = mo.load_checkpoint(args.pace_checkpoint)
    pace_net = mo.pace_network_from_checkpoint(
        {"config": {"variant": pace_ck["config"].get("variant", "bidirectional")},
         "arrays": pace_ck["arrays"]})
    init = _load_clips(args.init_clip)[0]
    waypoints = np.loadtxt(args.spline, delimiter=",", ndmin=2)
    try:
        spline = md.fit_spline(waypoints, args.segment_length)
        clip = mo.generate_locomotion(pose_net, pace_net, spline, init,
                                      args.frames, args.frame_rate)
    except mo.GenerationDivergedError as e:
        raise CliError(str(e), EXIT_NUMERIC)
    except ValueError as e:
        raise CliError(str(e), EXIT_DATA)
    md.save_clip(os.path.join(args.out, "generated.qmc"), clip)
    if args.bvh:
        md.save_bvh(os.path.join(args.out, "generated.bvh"), clip)
    dist = np.linalg.norm(np.diff(clip.root_positions[:, [0, 2]], axis=0), axis=1).sum()
    print(f"generated {clip.num_frames} frames covering {dist:.2f} units -> {args.out}")
    return EXIT_OK


def _protocol_from_arg(spec: str, seed: int, n: int, frame_rate: float) -> ev.EvalProtocol:
    if spec == "standard":
        s = 4
    elif spec == "proposed":
        s = 128
    elif spec.startswith("S="):
        s = int(spec[2:])
    else:
        raise CliError(f"unknown protocol {spec!r}", EXIT_USAGE)
    return ev.EvalProtocol(samples_per_sequence=s, seed=seed,
                           conditioning_frames=n, frame_rate=frame_rate)


def cmd_evaluate(args) -> int:
    write_manifest(args.out, args, args.seed)
    clips = _load_clips(args.dataset)
    proto = _protocol_from_arg(args.protocol, args.seed,
                               args.conditioning_frames, clips[0].frame_rate)
    net = _load_pose_net(args.checkpoint)
    if clips[0].skeleton.num_active != net.config.num_joints:
        raise CliError("checkpoint and dataset skeletons are incompatible", EXIT_DATA)
    report = ev.run_protocol(lambda p, h: tr.free_run_predict(net, p, h),
                             clips, proto)
    report.to_csv(os.path.join(args.out, "report.csv"), ci=True)
    print(report.summary())
    return EXIT_OK


def cmd_baseline(args) -> int:
    write_manifest(args.out, args, args.seed)
    clips = _load_clips(args.dataset)
    proto = _protocol_from_arg(args.protocol, args.seed,
                               args.conditioning_frames, clips[0].frame_rate)
    if args.kind == "zerovel":
        predictor = ev.baseline_zero_velocity
    elif args.kind == "runavg2":
        predictor = lambda p, h: ev.baseline_running_average(p, h, window=2)
    elif args.kind == "runavg4":
        predictor = lambda p, h: ev.baseline_running_average(p, h, window=4)
    else:
        raise CliError(f"unknown baseline {args.kind!r}", EXIT_USAGE)
    report = ev.run_protocol(predictor, clips, proto)
    report.to_csv(os.path.join(args.out, "report.csv"), ci=True)
    print(report.summary())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck
    failures = run_gradcheck(verbose=True)
    if failures:
        print(f"FAILED: {failures} gradient checks", file=sys.stderr)
        return EXIT_NUMERIC
    print("all gradient checks passed")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quatmotion",
                                description="Quaternion motion modeling toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="import/preprocess motion data")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--downsample", type=int, default=1)
    c.add_argument("--mirror", help="JSON file with a left/right joint swap map")
    c.add_argument("--prune-tol", dest="prune_tol", type=float)
    c.add_argument("--augment-rotations", dest="augment_rotations", type=int, default=0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--bvh", action="store_true", help="also write BVH files")
    c.set_defaults(func=cmd_convert)

    t = sub.add_parser("train-pose", help="train a pose network")
    t.add_argument("--config", help="key=value config file")
    t.add_argument("--dataset")
    t.add_argument("--preset", choices=["desk", "full"], default="desk")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_pose)

    tp = sub.add_parser("train-pace", help="train the pace network")
    tp.add_argument("--config")
    tp.add_argument("--dataset")
    tp.add_argument("--left-foot", dest="left_foot", default="l_foot")
    tp.add_argument("--right-foot", dest="right_foot", default="r_foot")
    tp.add_argument("--out", required=True)
    tp.set_defaults(func=cmd_train_pace)

    pr = sub.add_parser("predict", help="short-term prediction from a checkpoint")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--dataset", required=True)
    pr.add_argument("--horizon-ms", dest="horizon_ms", type=float, default=400)
    pr.add_argument("--conditioning-frames", dest="conditioning_frames",
                    type=int, default=10)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--bvh", action="store_true")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    g = sub.add_parser("generate", help="long-term locomotion along a spline")
    g.add_argument("--pose-checkpoint", dest="pose_checkpoint", required=True)
    g.add_argument("--pace-checkpoint", dest="pace_checkpoint", required=True)
    g.add_argument("--spline", required=True, help="CSV of ground-plane waypoints")
    g.add_argument("--init-clip", dest="init_clip", required=True)
    g.add_argument("--segment-length", dest="segment_length", type=float, default=0.25)
    g.add_argument("--frames", type=int, default=300)
    g.add_argument("--frame-rate", dest="frame_rate", type=float, default=25.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--bvh", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="run the short-term protocol on a model")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--protocol", default="standard",
                   help="standard | proposed | S=<int>")
    e.add_argument("--conditioning-frames", dest="conditioning_frames",
                   type=int, default=10)
    e.add_argument("--seed", type=int, default=1234)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", help="run the protocol on a baseline")
    b.add_argument("--kind", choices=["zerovel", "runavg2", "runavg4"],
                   required=True)
    b.add_argument("--dataset", required=True)
    b.add_argument("--protocol", default="standard")
    b.add_argument("--conditioning-frames", dest="conditioning_frames",
                   type=int, default=10)
    b.add_argument("--seed", type=int, default=1234)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
