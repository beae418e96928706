"""Procedural desk-scale dataset: blob/road/sky traffic scenes.

Domain A gets grayscale thermal-style renderings (warm road and objects on a
dark sky), domain B gets colorized renderings of independently drawn scenes,
so the two pools are unpaired. Written as PNGs plus a tab-separated manifest.
"""

from pathlib import Path

import numpy as np
from PIL import Image as PILImage


def _scene_masks(rng, size):
    """Random scene layout: sky/ground split, road wedge, object blobs."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    horizon = rng.uniform(0.30, 0.55) * size
    sky = yy < horizon

    vanish_x = rng.uniform(0.35, 0.65) * size
    half_width = rng.uniform(0.2, 0.4) * size
    depth = np.clip((yy - horizon) / max(size - horizon, 1.0), 0.0, 1.0)
    road = (~sky) & (np.abs(xx - vanish_x) < half_width * depth + 1.0)

    blobs = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(2, 6))):
        cy = rng.uniform(horizon, size - 2)
        cx = rng.uniform(2, size - 2)
        ry = rng.uniform(0.04, 0.14) * size
        rx = rng.uniform(0.04, 0.14) * size
        blobs |= ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
    return sky, road, blobs, yy / size


def _thermal_render(rng, size):
    sky, road, blobs, depth = _scene_masks(rng, size)
    img = np.full((size, size), 0.30)
    img[sky] = 0.08 + 0.10 * depth[sky]
    img[road] = 0.55
    img[blobs] = rng.uniform(0.70, 0.95)
    img += rng.normal(0.0, 0.01, img.shape)
    img = np.clip(img, 0.0, 1.0)
    # vary the global maximum so the dataset-level intensity ceiling is
    # exercised rather than pinned at 255
    return img * rng.uniform(0.75, 1.0)


def _color_render(rng, size):
    sky, road, blobs, depth = _scene_masks(rng, size)
    img = np.empty((size, size, 3))
    img[:] = (0.35, 0.45, 0.25)  # ground
    img[sky] = (0.45, 0.65, 0.95)
    img[sky] += (0.25 * (1.0 - depth[sky]))[:, None] * np.array([0.0, 0.1, 0.05])
    img[road] = (0.42, 0.42, 0.45)
    img[blobs] = rng.uniform(0.2, 0.95, size=3)
    img += rng.normal(0.0, 0.01, img.shape)
    return np.clip(img, 0.0, 1.0)


def _save_png(arr, path):
    data = np.round(arr * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L" if data.ndim == 2 else "RGB").save(path)


def generate_dataset(out_dir, n_a=16, n_b=16, size=64, seed=0):
    """Write n_a thermal and n_b color PNGs plus manifest.tsv under out_dir.

    Returns (dir_a, dir_b). Deterministic for a given seed.
    """
    out_dir = Path(out_dir)
    dir_a = out_dir / "a"
    dir_b = out_dir / "b"
    dir_a.mkdir(parents=True, exist_ok=True)
    dir_b.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    manifest = []
    for i in range(n_a):
        name = f"a_{i:03d}"
        _save_png(_thermal_render(rng, size), dir_a / f"{name}.png")
        manifest.append(f"{name}\tA")
    for i in range(n_b):
        name = f"b_{i:03d}"
        _save_png(_color_render(rng, size), dir_b / f"{name}.png")
        manifest.append(f"{name}\tB")
    (out_dir / "manifest.tsv").write_text("\n".join(manifest) + "\n")
    return dir_a, dir_b
