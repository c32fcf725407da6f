import numpy as np
from scipy.ndimage import convolve1d

from ..image import as_image


def gaussian_kernel(sigma, ksize):
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if ksize < 3 or ksize % 2 == 0:
        raise ValueError(f"ksize must be an odd integer >= 3, got {ksize}")
    r = ksize // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(image, sigma=1.0, ksize=5):
    """Separable Gaussian blur with replicated borders."""
    img = as_image(image)
    k = gaussian_kernel(sigma, ksize)
    out = convolve1d(img, k, axis=0, mode="nearest")
    return convolve1d(out, k, axis=1, mode="nearest")


class Preprocessor:
    """Per-frame preprocessing; ``sigma=0`` disables smoothing."""

    def __init__(self, sigma=1.0, ksize=5):
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if sigma > 0:
            gaussian_kernel(sigma, ksize)
        self.sigma = sigma
        self.ksize = ksize

    def __call__(self, image):
        if self.sigma == 0:
            return as_image(image)
        return gaussian_smooth(image, self.sigma, self.ksize)
