"""Tracking and register-to-reference loops."""
import functools
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .evaluate import evaluate, format_summary
from .imageio import FrameReadError, SequenceSource, read_corners, read_image, write_corners
from .preprocess import Preprocessor


class TrackingAbort(RuntimeError):
    pass


@dataclass
class RunResult:
    corners: np.ndarray
    times_us: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    summary: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.corners)


def _flags(tracker):
    r = tracker.last_result
    if r is None:
        return True, False
    return bool(r.converged), bool(r.failed)


def track_frames(tracker, frames, init_corners, preprocess=None):
    """Initialize on the first frame, update on the rest, record every region.

    ``frames`` is any iterable of images; timing covers the update call only.
    """
    pre = preprocess or Preprocessor(0.0)
    corners, times, conv, fail = [], [], [], []
    for t, frame in enumerate(frames):
        img = pre(frame)
        if t == 0:
            tracker.initialize(img, init_corners)
            times.append(0.0)
        else:
            t0 = time.perf_counter()
            tracker.update(img)
            times.append((time.perf_counter() - t0) * 1e6)
        c, f = _flags(tracker)
        corners.append(tracker.get_region())
        conv.append(c)
        fail.append(f)
    if not corners:
        raise ValueError("no frames to track")
    return RunResult(np.array(corners), np.array(times), np.array(conv), np.array(fail))


def localize_frames(tracker, reference, queries, init_region, preprocess=None):
    """Register each query frame against ``reference``.

    The template is rebuilt from every query at its full extent, seated at
    the previous location in the reference, and aligned by one update on the
    reference image.
    """
    pre = preprocess or Preprocessor(0.0)
    ref = pre(reference)
    location = np.asarray(init_region, dtype=np.float64)
    corners, times, conv, fail = [], [], [], []
    for query in queries:
        q = pre(query)
        h, w = q.shape
        extent = np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])
        tracker.initialize(q, extent)
        tracker.set_region(location)
        t0 = time.perf_counter()
        tracker.update(ref)
        times.append((time.perf_counter() - t0) * 1e6)
        location = tracker.get_region()
        c, f = _flags(tracker)
        corners.append(location)
        conv.append(c)
        fail.append(f)
    if not corners:
        raise ValueError("no query frames")
    return RunResult(np.array(corners), np.array(times), np.array(conv), np.array(fail))


def _load_truth(cfg):
    return read_corners(cfg.gt) if cfg.gt else None


def _initial_corners(cfg, truth):
    init = cfg.init_corners()
    if init is not None:
        return init
    if truth is not None and len(truth):
        return truth[0]
    raise ValueError("initial corners needed: pass --init or a ground-truth file")


def _finish(cfg, result, truth, name):
    # the first tracking frame is the initialization, not an update
    times = result.times_us[1:] if name == "track" else result.times_us
    if truth is not None and len(truth):
        _, result.summary = evaluate(result.corners, truth, times)
    else:
        result.summary = {"frames": len(result)}
        if len(times):
            result.summary["mean_time_us"] = float(np.mean(times))
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_corners(os.path.join(cfg.out, f"{name}_corners.txt"), result.corners,
                      header=f"{cfg.sm} {cfg.am} {cfg.ssm}")
        with open(os.path.join(cfg.out, f"{name}_summary.txt"), "w") as fh:
            if "success" in result.summary:
                fh.write(format_summary(result.summary) + "\n")
            else:
                fh.write("".join(f"{k} = {v}\n" for k, v in result.summary.items()))
            fh.write(f"failed_frames = {int(result.failed.sum())}\n")
    return result


def _guarded(fn):
    @functools.wraps(fn)
    def run(*args, **kw):
        try:
            return fn(*args, **kw)
        except FrameReadError as exc:
            raise TrackingAbort(f"aborted at frame {exc.index}: {exc}") from exc
    return run


@_guarded
def run_tracking(config):
    cfg = config if isinstance(config, RunConfig) else RunConfig(**config)
    if not cfg.seq:
        raise ValueError("a sequence directory is required")
    source = SequenceSource.from_dir(cfg.seq)
    truth = _load_truth(cfg)
    init = _initial_corners(cfg, truth)
    tracker = cfg.make_tracker()
    result = track_frames(tracker, source, init, Preprocessor(cfg.smooth_sigma, cfg.smooth_ksize))
    return _finish(cfg, result, truth, "track")


@_guarded
def run_localization(config):
    cfg = config if isinstance(config, RunConfig) else RunConfig(**config)
    if not cfg.seq or not cfg.ref:
        raise ValueError("localization needs a reference image and a query sequence")
    try:
        reference = read_image(cfg.ref)
    except (OSError, ValueError) as exc:
        raise TrackingAbort(f"cannot read reference image {cfg.ref}: {exc}") from exc
    source = SequenceSource.from_dir(cfg.seq)
    truth = _load_truth(cfg)
    init = _initial_corners(cfg, truth)
    tracker = cfg.make_tracker()
    result = localize_frames(tracker, reference, source, init,
                             Preprocessor(cfg.smooth_sigma, cfg.smooth_ksize))
    return _finish(cfg, result, truth, "localize")
