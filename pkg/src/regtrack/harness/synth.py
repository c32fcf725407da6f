"""Synthetic sequences with exact ground truth.

Frame ``t`` shows the base texture warped by the homography taking the base
region onto the frame-``t`` corners, so resampling frame ``t`` inside its
ground-truth region reproduces the base patch up to interpolation error.
"""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..image import as_image, sample_patch
from ..ssm import check_corners, normalized_dlt, project

MAX_ATTEMPTS = 100


def make_texture(size=300, seed=0, scales=(1.5, 4.0, 10.0)):
    """Multi-scale blurred noise stretched to [0, 255]."""
    rng = np.random.default_rng(seed)
    h, w = (size, size) if np.isscalar(size) else size
    img = np.zeros((h, w))
    for s in scales:
        layer = gaussian_filter(rng.standard_normal((h, w)), s, mode="reflect")
        img += layer / layer.std()
    img -= img.min()
    return img * (255.0 / img.max())


def warp_image(base, H, shape=None):
    """Image whose pixel ``y`` takes the base value at ``H^-1 y``."""
    base = as_image(base)
    h, w = shape if shape is not None else base.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    src = project(np.linalg.inv(H), pts)
    return sample_patch(base, src).reshape(h, w)


def interior_angles(corners):
    c = np.asarray(corners, dtype=np.float64)
    e = np.roll(c, -1, axis=0) - c
    prev = -np.roll(e, 1, axis=0)
    cos = np.einsum("ij,ij->i", prev, e) / (np.linalg.norm(prev, axis=1) * np.linalg.norm(e, axis=1))
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def region_ok(corners, shape, margin=2.0, min_edge=10.0, angle_range=(30.0, 150.0)):
    """Corners form a convex quad inside the image with no near-collinear corner."""
    c = np.asarray(corners, dtype=np.float64)
    h, w = shape
    if np.any(c < margin) or np.any(c[:, 0] > w - 1 - margin) or np.any(c[:, 1] > h - 1 - margin):
        return False
    edges = np.roll(c, -1, axis=0) - c
    if np.min(np.linalg.norm(edges, axis=1)) < min_edge:
        return False
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    if not (np.all(cross > 0) or np.all(cross < 0)):
        return False
    ang = interior_angles(c)
    return bool(np.all(ang >= angle_range[0]) and np.all(ang <= angle_range[1]))


@dataclass
class SynthConfig:
    n_frames: int = 100
    corner_sigma_px: float = 3.0
    seed: int = 0
    size: int = 300
    box: float = 100.0
    texture_seed: int = None
    quantize: bool = True


def default_corners(shape, box):
    h, w = shape
    x0, y0 = (w - 1 - box) / 2.0, (h - 1 - box) / 2.0
    return np.array([[x0, y0], [x0 + box, y0], [x0 + box, y0 + box], [x0, y0 + box]])


def generate_synthetic(config=None, base=None, init_corners=None):
    """Return ``(frames, truth)``: a list of images and a (T, 4, 2) corner array.

    Corners random-walk independently with the configured sigma per frame; a
    step that leaves the image or degenerates the quad is redrawn, up to
    ``MAX_ATTEMPTS`` times.
    """
    cfg = config or SynthConfig()
    if cfg.n_frames < 1:
        raise ValueError("n_frames must be positive")
    if cfg.corner_sigma_px < 0:
        raise ValueError("corner_sigma_px must be nonnegative")
    if base is None:
        tseed = cfg.seed if cfg.texture_seed is None else cfg.texture_seed
        base = make_texture(cfg.size, seed=tseed)
    base = as_image(base)
    c0 = default_corners(base.shape, cfg.box) if init_corners is None else check_corners(init_corners)
    if not region_ok(c0, base.shape):
        raise ValueError("initial region does not fit inside the base image")
    rng = np.random.default_rng(cfg.seed)
    truth = [c0]
    for _ in range(1, cfg.n_frames):
        for _attempt in range(MAX_ATTEMPTS):
            cand = truth[-1] + rng.normal(0.0, cfg.corner_sigma_px, (4, 2))
            if region_ok(cand, base.shape):
                break
        else:
            raise RuntimeError(f"could not keep the region inside the image after {MAX_ATTEMPTS} draws")
        truth.append(cand)
    truth = np.array(truth)
    frames = []
    for c in truth:
        if np.array_equal(c, c0):
            frame = base.copy()
        else:
            frame = warp_image(base, normalized_dlt(c0, c))
        if cfg.quantize:
            frame = np.clip(np.rint(frame), 0, 255)
        frames.append(frame)
    return frames, truth


def generate_crops(reference, n_steps=20, crop_size=200, step_px=12.0, max_rot_deg=2.0,
                   max_scale=0.02, seed=0, start=None):
    """Query crops of ``reference`` at known, overlapping placements.

    Returns ``(crops, placements)`` where ``placements[t]`` are the reference
    coordinates of crop ``t``'s four corners.  Each step translates by at most
    ``step_px`` along each axis and adds a small rotation and scale change.
    """
    ref = as_image(reference)
    rng = np.random.default_rng(seed)
    s = crop_size - 1.0
    local = np.array([[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]])
    h, w = ref.shape
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0]) if start is None else np.asarray(start, float)
    angle, scale = 0.0, 1.0
    crops, placements = [], []
    for t in range(n_steps):
        for _attempt in range(MAX_ATTEMPTS):
            if t == 0:
                c, a, sc = center, angle, scale
            else:
                c = center + rng.uniform(-step_px, step_px, 2)
                a = angle + np.deg2rad(rng.uniform(-max_rot_deg, max_rot_deg))
                sc = scale * (1.0 + rng.uniform(-max_scale, max_scale))
            R = sc * np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
            quad = (local - s / 2.0) @ R.T + c
            if region_ok(quad, ref.shape):
                break
        else:
            raise RuntimeError("crop placement left the reference image")
        center, angle, scale = c, a, sc
        H = normalized_dlt(quad, local)
        crops.append(warp_image(ref, H, shape=(crop_size, crop_size)))
        placements.append(quad)
    return crops, np.array(placements)
