"""Command-line entry point: ``regtrack {track,localize,synth,eval,bench}``.

Exit status: 0 on success, 1 when tracking aborts (unreadable frame), 2 on a
usage or configuration error.
"""
import argparse
import os
import sys
import time

import numpy as np

from ..appearance import AM_TYPES
from ..errors import DegeneratePatchError, SingularWarpError
from ..search import SM_TYPES
from .config import RUN_KEYS, build_config, parse_resolution, read_config_file
from .evaluate import evaluate, format_summary
from .imageio import read_corners, write_corners, write_pnm, write_sequence
from .preprocess import Preprocessor
from .runner import TrackingAbort, run_localization, run_tracking, track_frames
from .synth import SynthConfig, generate_crops, generate_synthetic, make_texture

PRECEDENCE = ("Settings are resolved as: built-in defaults < --config FILE "
              "(key = value lines) < command-line flags.")


class UsageError(Exception):
    pass


def _tracker_flags(p):
    # defaults live in RunConfig; None means "not given on the command line"
    g = p.add_argument_group("tracker")
    g.add_argument("--sm", choices=sorted(SM_TYPES))
    g.add_argument("--am", choices=sorted(AM_TYPES))
    g.add_argument("--ssm", help="2, 4, 6, 8 or translation/similitude/affine/homography")
    g.add_argument("--ilm", choices=["none", "gb"])
    g.add_argument("--resolution", help="sampling grid, e.g. 50x50")
    g.add_argument("--hessian-order", dest="hessian_order", choices=["first", "second"])
    g.add_argument("--max-iterations", dest="max_iterations", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--n-samples", dest="n_samples", type=int)
    g.add_argument("--index", choices=["brute-force", "kd-tree"])
    g.add_argument("--n-particles", dest="n_particles", type=int)
    g.add_argument("--corner-sigma", dest="corner_sigma", type=float)
    g.add_argument("--smooth-sigma", dest="smooth_sigma", type=float,
                   help="Gaussian preprocessing sigma (0 disables)")
    g.add_argument("--seed", type=int)
    g.add_argument("--config", help="key = value settings file")


def build_parser():
    parser = argparse.ArgumentParser(prog="regtrack", description=__doc__.splitlines()[0],
                                     epilog=PRECEDENCE)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track a region through an image sequence", epilog=PRECEDENCE)
    _tracker_flags(p)
    p.add_argument("--seq", help="directory of frames (sorted by name)")
    p.add_argument("--gt", help="ground-truth corners file (first line initializes)")
    p.add_argument("--init", help='initial corners "x1,y1,x2,y2,x3,y3,x4,y4"')
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("localize", help="register query frames against a reference image",
                       epilog=PRECEDENCE)
    _tracker_flags(p)
    p.add_argument("--ref", help="reference image")
    p.add_argument("--seq", help="directory of query frames")
    p.add_argument("--gt", help="true placements of the queries in the reference")
    p.add_argument("--init", help="initial region in the reference")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["sequence", "crops"], default="sequence")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--sigma", type=float, default=3.0, help="corner random-walk sigma (px)")
    p.add_argument("--size", type=int, default=300, help="texture size (px)")
    p.add_argument("--box", type=float, default=100.0, help="initial region side (px)")
    p.add_argument("--crop-size", dest="crop_size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="score a corners file against ground truth")
    p.add_argument("--result", required=True)
    p.add_argument("--gt", required=True)

    p = sub.add_parser("bench", help="measure update throughput and synthetic accuracy",
                       epilog=PRECEDENCE)
    _tracker_flags(p)
    p.add_argument("--updates", type=int, default=200, help="timed updates")
    p.add_argument("--seqs", type=int, default=0, help="synthetic sequences to score")
    p.add_argument("--frames", type=int, default=100)
    return parser


def _config(args):
    values = {k: v for k, v in vars(args).items() if k in RUN_KEYS}
    try:
        file_values = read_config_file(args.config) if args.config else {}
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    try:
        return build_config(file_values, values)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _report(result, out=None):
    out = out or sys.stdout
    s = result.summary
    if "success" in s:
        print(format_summary(s), file=out)
    else:
        for k, v in s.items():
            print(f"{k} = {v}", file=out)
    print(f"failed_frames = {int(result.failed.sum())}", file=out)


def cmd_track(args):
    result = run_tracking(_config(args))
    _report(result)


def cmd_localize(args):
    result = run_localization(_config(args))
    _report(result)


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    if args.mode == "sequence":
        frames, truth = generate_synthetic(SynthConfig(
            n_frames=args.frames, corner_sigma_px=args.sigma, seed=args.seed,
            size=args.size, box=args.box))
        write_sequence(os.path.join(args.out, "frames"), frames)
    else:
        ref = np.clip(np.rint(make_texture(args.size, seed=args.seed)), 0, 255)
        write_pnm(os.path.join(args.out, "reference.pgm"), ref)
        frames, truth = generate_crops(ref, n_steps=args.frames, crop_size=args.crop_size,
                                       seed=args.seed)
        write_sequence(os.path.join(args.out, "frames"), frames)
    write_corners(os.path.join(args.out, "groundtruth.txt"), truth)
    print(f"wrote {len(frames)} frames to {args.out}")


def cmd_eval(args):
    try:
        corners, truth = read_corners(args.result), read_corners(args.gt)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    _, summary = evaluate(corners, truth)
    print(format_summary(summary))


def cmd_bench(args):
    cfg = _config(args)
    frames, truth = generate_synthetic(SynthConfig(n_frames=2, seed=cfg.seed))
    pre = Preprocessor(cfg.smooth_sigma, cfg.smooth_ksize)
    f0, f1 = pre(frames[0]), pre(frames[1])
    tracker = cfg.make_tracker()
    tracker.initialize(f0, truth[0])
    t0 = time.perf_counter()
    for _ in range(args.updates):
        tracker.set_region(truth[0])
        tracker.update(f1)
    rate = args.updates / (time.perf_counter() - t0)
    print(f"{cfg.sm} {cfg.am} {cfg.ssm} {cfg.resolution[0]}x{cfg.resolution[1]}: "
          f"{rate:.1f} updates/sec")
    if args.seqs > 0:
        tracked, truths = [], []
        for s in range(args.seqs):
            frames, truth = generate_synthetic(SynthConfig(n_frames=args.frames, seed=s))
            tracked.append(track_frames(cfg.make_tracker(), frames, truth[0], pre).corners)
            truths.append(truth)
        _, summary = evaluate(np.concatenate(tracked), np.concatenate(truths))
        print(format_summary(summary))


COMMANDS = {"track": cmd_track, "localize": cmd_localize, "synth": cmd_synth,
            "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "resolution", None):
            parse_resolution(args.resolution)
        COMMANDS[args.command](args)
    except (TrackingAbort, DegeneratePatchError, SingularWarpError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
