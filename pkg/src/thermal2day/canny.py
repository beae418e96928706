"""Fixed in-repo Canny edge detector.

One deterministic implementation (Gaussian smoothing, 3x3 Sobel, directional
non-maximum suppression, hysteresis by connected components) backs both the
offline edge maps used during training and the edge-consistency metric, so
edge sets are bit-stable across platforms.

Thresholds are fractions of the image's maximum gradient magnitude, which
makes a sweep over (0, 1) meaningful for any input.
"""

import numpy as np
from scipy import ndimage

GAUSSIAN_SIGMA = 1.4

# Below this maximum gradient magnitude an image counts as gradient-free;
# keeps float fuzz on constant images from producing noise edges.
NORM_FLOOR = 1e-12

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T

# Neighbor pairs along the gradient direction for each quantized sector
# (0:horizontal, 1:45deg, 2:vertical, 3:135deg). Ties are broken by using
# >= toward the first neighbor and > toward the second, so of two equal
# adjacent responses exactly one survives thinning.
_SECTOR_NEIGHBORS = {
    0: ((0, 1), (0, -1)),
    1: ((1, 1), (-1, -1)),
    2: ((1, 0), (-1, 0)),
    3: ((1, -1), (-1, 1)),
}


def _shifted(a, dy, dx):
    """a sampled at (r+dy, c+dx), zero outside the frame."""
    out = np.zeros_like(a)
    h, w = a.shape
    src = (slice(max(dy, 0), h + min(dy, 0)), slice(max(dx, 0), w + min(dx, 0)))
    dst = (slice(max(-dy, 0), h + min(-dy, 0)), slice(max(-dx, 0), w + min(-dx, 0)))
    out[dst] = a[src]
    return out


def gradient_field(gray, sigma=GAUSSIAN_SIGMA):
    """Smoothed Sobel gradient components (gx, gy) of a 2D float image."""
    if gray.ndim != 2:
        raise ValueError(f"expected a 2D grayscale image, got shape {gray.shape}")
    smoothed = ndimage.gaussian_filter(gray.astype(np.float64), sigma, mode="nearest")
    gx = ndimage.correlate(smoothed, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(smoothed, _SOBEL_Y, mode="nearest")
    return gx, gy


def thin_gradient(gray, sigma=GAUSSIAN_SIGMA):
    """Non-maximum-suppressed gradient magnitude and its normalizer.

    Returns (thinned, norm) where norm is the maximum pre-suppression
    magnitude; hysteresis thresholds are taken as fractions of norm.
    Splitting this from `hysteresis` lets threshold sweeps reuse the
    expensive part.
    """
    gx, gy = gradient_field(gray, sigma)
    mag = np.hypot(gx, gy)
    sector = np.round(np.arctan2(gy, gx) / (np.pi / 4.0)).astype(int) % 4
    keep = np.zeros(mag.shape, dtype=bool)
    for s, ((dy1, dx1), (dy2, dx2)) in _SECTOR_NEIGHBORS.items():
        n1 = _shifted(mag, dy1, dx1)
        n2 = _shifted(mag, dy2, dx2)
        keep |= (sector == s) & (mag >= n1) & (mag > n2)
    return mag * keep, float(mag.max())


def hysteresis(thinned, norm, high, low):
    """Binary edge map from a thinned magnitude at relative thresholds.

    Weak-edge components (8-connected) are kept only if they contain a
    pixel above the high threshold.
    """
    if not 0.0 < high < 1.0:
        raise ValueError(f"high threshold must be in (0, 1), got {high}")
    if norm <= NORM_FLOOR:
        return np.zeros(thinned.shape, dtype=bool)
    strong = thinned > high * norm
    if not strong.any():
        return np.zeros(thinned.shape, dtype=bool)
    weak = thinned > low * norm
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    strong_labels = np.unique(labels[strong])
    return np.isin(labels, strong_labels[strong_labels > 0])


def canny(gray, high, low=None, sigma=GAUSSIAN_SIGMA):
    """Binary Canny edge map of a 2D image at a relative high threshold.

    `low` defaults to half the high threshold.
    """
    if low is None:
        low = high / 2.0
    thinned, norm = thin_gradient(gray, sigma)
    return hysteresis(thinned, norm, high, low)
