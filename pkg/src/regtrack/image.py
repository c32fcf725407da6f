"""Pixel-level operations on grayscale images.

Images are 2-D float arrays indexed ``image[row, col]``.  Point grids are
``(N, 2)`` arrays of ``(x, y)`` = ``(col, row)`` coordinates with the origin at
the center of the top-left pixel.  Sampling is bilinear; coordinates outside
``[0, W-1] x [0, H-1]`` are clamped component-wise first.
"""
import numpy as np

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def as_image(data):
    """Validate ``data`` and return it as a float64 grayscale image.

    Color input (``H x W x 3``) is converted with the usual luma weights.
    """
    img = np.asarray(data, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] in (3, 4):
        img = img[..., :3] @ np.asarray(GRAY_WEIGHTS)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError(f"image must be at least 2x2, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def _check_grid(grid):
    pts = np.asarray(grid, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"grid must have shape (N, 2), got {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError("empty point grid")
    if not np.all(np.isfinite(pts)):
        raise ValueError("grid contains non-finite coordinates")
    return pts


def _bilinear(img, x, y):
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2)
    fx = x - x0
    fy = y - y0
    flat = img.ravel()
    idx = y0 * w + x0
    v00 = flat[idx]
    v01 = flat[idx + 1]
    v10 = flat[idx + w]
    v11 = flat[idx + w + 1]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def sample_patch(image, grid):
    """Bilinearly interpolated intensities of ``image`` at the grid points."""
    pts = _check_grid(grid)
    return _bilinear(np.asarray(image, dtype=np.float64), pts[:, 0], pts[:, 1])


def pix_grad(image, grid, step=0.5):
    """Central-difference gradient ``(dI/dx, dI/dy)`` per point, shape (N, 2).

    With the default half-pixel step the two samples are one pixel apart,
    which makes the estimate exact for quadratics under bilinear sampling.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    pts = _check_grid(grid)
    img = np.asarray(image, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    n = len(pts)
    xs = np.concatenate([x + step, x - step, x, x])
    ys = np.concatenate([y, y, y + step, y - step])
    v = _bilinear(img, xs, ys)
    grad = np.empty((n, 2))
    grad[:, 0] = (v[:n] - v[n:2 * n]) / (2 * step)
    grad[:, 1] = (v[2 * n:3 * n] - v[3 * n:]) / (2 * step)
    return grad


def pix_hess(image, grid, step=1.0):
    """Central-difference spatial Hessian per point, shape (N, 2, 2).

    The cross term is computed once and mirrored so every block is exactly
    symmetric.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    pts = _check_grid(grid)
    img = np.asarray(image, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    n = len(pts)
    h = step
    xs = np.concatenate([x, x + h, x - h, x, x, x + h, x + h, x - h, x - h])
    ys = np.concatenate([y, y, y, y + h, y - h, y + h, y - h, y + h, y - h])
    v = _bilinear(img, xs, ys).reshape(9, n)
    c, xp, xm, yp, ym, pp, pm, mp, mm = v
    hess = np.empty((n, 2, 2))
    hess[:, 0, 0] = (xp - 2 * c + xm) / (h * h)
    hess[:, 1, 1] = (yp - 2 * c + ym) / (h * h)
    cross = (pp - pm - mp + mm) / (4 * h * h)
    hess[:, 0, 1] = cross
    hess[:, 1, 0] = cross
    return hess


class ImageBase:
    """Holds the initial and current frames and samples patches from them.

    Appearance models derive from this so that search methods only touch
    pixels through the appearance model.
    """

    def __init__(self, grad_step=0.5, hess_step=1.0):
        self.grad_step = grad_step
        self.hess_step = hess_step
        self.init_img = None
        self.curr_img = None
        self.init_pix_vals = None
        self.init_pix_grad = None
        self.init_pix_hess = None
        self.curr_pix_vals = None
        self.curr_pix_grad = None
        self.curr_pix_hess = None

    def set_init_image(self, image):
        self.init_img = as_image(image)
        self.curr_img = self.init_img

    def set_curr_image(self, image):
        self.curr_img = as_image(image)

    def initialize_pix_vals(self, pts):
        self.init_pix_vals = sample_patch(self.init_img, pts)
        self.curr_pix_vals = self.init_pix_vals.copy()
        return self.init_pix_vals

    def initialize_pix_grad(self, pts):
        self.init_pix_grad = pix_grad(self.init_img, pts, self.grad_step)
        self.curr_pix_grad = self.init_pix_grad.copy()
        return self.init_pix_grad

    def initialize_pix_hess(self, pts):
        self.init_pix_hess = pix_hess(self.init_img, pts, self.hess_step)
        self.curr_pix_hess = self.init_pix_hess.copy()
        return self.init_pix_hess

    def update_pix_vals(self, pts):
        self.curr_pix_vals = sample_patch(self.curr_img, pts)
        return self.curr_pix_vals

    def update_pix_grad(self, pts):
        self.curr_pix_grad = pix_grad(self.curr_img, pts, self.grad_step)
        return self.curr_pix_grad

    def update_pix_hess(self, pts):
        self.curr_pix_hess = pix_hess(self.curr_img, pts, self.hess_step)
        return self.curr_pix_hess
