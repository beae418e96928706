"""Offline edge maps, differentiable gradient magnitude, and patch sampling.

Edge maps are binary Canny detections precomputed per training image and
cached to disk; gradient maps of generated images stay inside the autograd
graph so the alignment loss can steer the generator.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage

from . import canny

DEFAULT_EDGE_HIGH = 0.2
DEFAULT_PATCH_SIZE = 32

_GRAD_EPS = 1e-12


def to_gray(pixels):
    """Channel mean of an (h, w, c) array; 2D arrays pass through."""
    if pixels.ndim == 2:
        return pixels
    return pixels.mean(axis=2)


def _cache_key(gray, high, low):
    digest = hashlib.sha1()
    digest.update(np.ascontiguousarray(gray, dtype=np.float32).tobytes())
    digest.update(f"|{high:.6g}|{low:.6g}|{canny.GAUSSIAN_SIGMA:.6g}".encode())
    return digest.hexdigest()[:20]


def detect_edges(pixels, high=DEFAULT_EDGE_HIGH, low=None, cache_dir=None):
    """Binary edge map of an image, optionally cached under cache_dir.

    The cache key covers image content and detector parameters, so stale
    entries cannot be picked up after a parameter change.
    """
    if low is None:
        low = high / 2.0
    gray = to_gray(pixels)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"{_cache_key(gray, high, low)}.png"
        if path.is_file():
            with PILImage.open(path) as im:
                return np.asarray(im) > 0
    edge = canny.canny(gray, high, low)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        PILImage.fromarray(edge.astype(np.uint8) * 255, mode="L").save(path)
    return edge


def sharpness_threshold(max_intensity):
    """Minimum gradient ratio for a clear edge: 0.8 * max_intensity / 255.

    max_intensity is the raw 0-255 ceiling over all domain-A training
    images; full-range data gives 0.8.
    """
    if max_intensity <= 0:
        raise ValueError(f"max intensity must be > 0, got {max_intensity}")
    return 0.8 * max_intensity / 255.0


_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_KERNEL = torch.stack([_SOBEL_X, _SOBEL_X.t()]).unsqueeze(1)  # (2,1,3,3)


def gradient_magnitude(x):
    """Sobel gradient magnitude of an (n, c, h, w) batch, max over channels.

    Differentiable everywhere (smoothed at zero gradient so constant regions
    map to exactly 0); output is (n, 1, h, w), nonnegative.
    """
    n, c, h, w = x.shape
    kernel = _SOBEL_KERNEL.to(dtype=x.dtype, device=x.device)
    flat = x.reshape(n * c, 1, h, w)
    flat = F.pad(flat, (1, 1, 1, 1), mode="replicate")
    g = F.conv2d(flat, kernel)  # (n*c, 2, h, w)
    mag = torch.sqrt(g[:, 0] ** 2 + g[:, 1] ** 2 + _GRAD_EPS) - _GRAD_EPS**0.5
    return mag.reshape(n, c, h, w).amax(dim=1, keepdim=True)


@dataclass(frozen=True)
class EdgePatch:
    """Patch values normalized by their own maximum, plus the sample origin."""

    values: np.ndarray
    top: int
    left: int


def sample_edge_patch(edge_map, patch_size, rng):
    """Pick a patch_size tile with probability proportional to edge density.

    Tiles snap to a non-overlapping grid; partial border tiles are ignored.
    Raises ValueError when no tile contains an edge pixel.
    """
    h, w = edge_map.shape
    rows = h // patch_size
    cols = w // patch_size
    if rows == 0 or cols == 0:
        raise ValueError(f"edge map {h}x{w} smaller than patch {patch_size}")
    grid = (
        edge_map[: rows * patch_size, : cols * patch_size]
        .astype(np.float64)
        .reshape(rows, patch_size, cols, patch_size)
        .sum(axis=(1, 3))
    )
    total = grid.sum()
    if total <= 0:
        raise ValueError("no edge pixels to sample a patch from")
    idx = int(rng.choice(rows * cols, p=(grid / total).ravel()))
    top = (idx // cols) * patch_size
    left = (idx % cols) * patch_size
    values = edge_map[top : top + patch_size, left : left + patch_size].astype(
        np.float64
    )
    return EdgePatch(values / values.max(), top, left)
