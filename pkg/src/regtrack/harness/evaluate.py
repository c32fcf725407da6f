import numpy as np

THRESHOLDS = (1, 2, 5, 10, 20)


def mean_corner_distance(corners, truth):
    """Per-frame mean of the four Euclidean corner errors."""
    a = np.asarray(corners, dtype=np.float64).reshape(-1, 4, 2)
    b = np.asarray(truth, dtype=np.float64).reshape(-1, 4, 2)
    if len(a) != len(b):
        raise ValueError(f"frame counts differ: {len(a)} vs {len(b)}")
    return np.linalg.norm(a - b, axis=2).mean(axis=1)


def evaluate(corners, truth, times_us=None, thresholds=THRESHOLDS):
    """Score tracked corners against ground truth.

    ``truth`` may be longer than ``corners`` (a prefix was tracked) or vice
    versa; any other mismatch is an error.  Success rate at threshold ``t`` is
    the fraction of frames with MCD <= t.
    """
    corners = np.asarray(corners, dtype=np.float64).reshape(-1, 4, 2)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, 4, 2)
    n = min(len(corners), len(truth))
    if n == 0:
        raise ValueError("nothing to evaluate")
    mcd = mean_corner_distance(corners[:n], truth[:n])
    summary = {
        "frames": n,
        "mean_mcd": float(mcd.mean()),
        "median_mcd": float(np.median(mcd)),
        "success": {t: float(np.mean(mcd <= t)) for t in thresholds},
    }
    if times_us is not None and len(times_us):
        summary["mean_time_us"] = float(np.mean(times_us))
    return mcd, summary


def format_summary(summary):
    lines = [f"frames = {summary['frames']}",
             f"mean_mcd = {summary['mean_mcd']:.4f}",
             f"median_mcd = {summary['median_mcd']:.4f}"]
    for t, rate in summary["success"].items():
        lines.append(f"success_{t}px = {rate:.4f}")
    if "mean_time_us" in summary:
        lines.append(f"mean_time_us = {summary['mean_time_us']:.1f}")
    return "\n".join(lines)
