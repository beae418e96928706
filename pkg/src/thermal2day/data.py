"""Image representation, unpaired dataset ingestion, preprocessing, augmentation.

Domain A holds nighttime thermal captures (single-channel sources, replicated
to 3 channels on ingest so both generators share one architecture); domain B
holds daytime color images. All loaded pixel data is float32 in [0, 1].
"""

import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DataError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class Domain(Enum):
    NTIR = "A"  # nighttime thermal infrared
    DC = "B"  # daytime color


@dataclass(frozen=True)
class ImageSample:
    """One image: (h, w, 3) float32 pixels in [0, 1], domain tag, stable id."""

    pixels: np.ndarray
    domain: Domain
    id: str

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class UnpairedDataset:
    """Unpaired image pools plus the raw intensity maximum of domain A.

    max_intensity is on the 0-255 source scale, taken over every pixel of
    every domain-A file before any normalization; it parameterizes the
    edge-sharpness threshold of the gradient alignment loss.
    """

    domain_a: list
    domain_b: list
    max_intensity: float


@dataclass(frozen=True)
class PreprocessConfig:
    resize_wh: tuple = (500, 400)
    crop_wh: tuple = (360, 288)
    train_crop: int = 256
    hflip_prob: float = 0.5

    def __post_init__(self):
        rw, rh = self.resize_wh
        cw, ch = self.crop_wh
        if cw > rw or ch > rh:
            raise DataError(f"crop {self.crop_wh} exceeds resize {self.resize_wh}")
        if self.train_crop > cw or self.train_crop > ch:
            raise DataError(
                f"train crop {self.train_crop} exceeds crop dims {self.crop_wh}"
            )
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise DataError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")


def decode_image_file(path):
    """Load one image file; returns ((h, w, 3) float32 in [0, 1], raw max).

    Single-channel sources are replicated to 3 channels; the raw max is on
    the 0-255 scale before normalization.
    """
    with PILImage.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if len(im.getbands()) >= 3 else "L")
        raw = np.asarray(im)
    raw_max = float(raw.max())
    pixels = raw.astype(np.float32) / 255.0
    if pixels.ndim == 2:
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
    return pixels, raw_max


def _list_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    # sorted lexicographically so seeded sampling is platform-independent
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise DataError(f"no image files in {directory}")
    return files


def _load_domain(directory, domain, skip_undecodable):
    samples = []
    raw_max = 0.0
    for path in _list_images(directory):
        try:
            pixels, file_max = decode_image_file(path)
        except Exception as exc:
            if skip_undecodable:
                warnings.warn(f"skipping undecodable file {path}: {exc}")
                continue
            raise DataError(f"undecodable file {path}: {exc}") from exc
        samples.append(ImageSample(pixels, domain, path.stem))
        raw_max = max(raw_max, file_max)
    if not samples:
        raise DataError(f"no decodable images in {directory}")
    return samples, raw_max


def load_dataset(dir_a, dir_b, skip_undecodable=False):
    """Load both domain directories into an UnpairedDataset.

    Raises DataError on empty directories, and on undecodable files unless
    skip_undecodable is set (then they are warned about and dropped).
    """
    domain_a, max_a = _load_domain(dir_a, Domain.NTIR, skip_undecodable)
    domain_b, _ = _load_domain(dir_b, Domain.DC, skip_undecodable)
    if max_a <= 0.0:
        raise DataError("domain-A max intensity must be > 0 (all-zero images)")
    return UnpairedDataset(domain_a, domain_b, max_a)


def _resize_bilinear(pixels, size_wh):
    if (pixels.shape[1], pixels.shape[0]) == tuple(size_wh):
        return pixels
    channels = [
        np.asarray(
            PILImage.fromarray(pixels[:, :, c], mode="F").resize(
                tuple(size_wh), PILImage.Resampling.BILINEAR
            )
        )
        for c in range(pixels.shape[2])
    ]
    return np.stack(channels, axis=2)


def _center_crop(pixels, size_wh):
    cw, ch = size_wh
    h, w = pixels.shape[:2]
    top = (h - ch) // 2
    left = (w - cw) // 2
    return pixels[top : top + ch, left : left + cw]


def preprocess(img: ImageSample, cfg: PreprocessConfig):
    """Resize then center-crop to the configured working resolution.

    An image already at crop size is passed through unchanged, which makes
    the operation idempotent.
    """
    if (img.width, img.height) == tuple(cfg.crop_wh):
        return img
    pixels = _resize_bilinear(img.pixels, cfg.resize_wh)
    pixels = _center_crop(pixels, cfg.crop_wh)
    pixels = np.clip(pixels, 0.0, 1.0).astype(np.float32)
    return ImageSample(pixels, img.domain, img.id)


@dataclass(frozen=True)
class AugmentParams:
    flip: bool
    top: int
    left: int


def sample_augment(shape_hw, crop, hflip_prob, rng):
    """Draw flip/crop-offset parameters; one draw order, reproducible by rng."""
    h, w = shape_hw
    if h < crop or w < crop:
        raise DataError(f"image {h}x{w} smaller than crop {crop}")
    flip = bool(rng.random() < hflip_prob)
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    return AugmentParams(flip, top, left)


def apply_augment(arr, params: AugmentParams, crop):
    """Apply flip-then-crop to any (h, w, ...) raster; aligned rasters of the
    same image must be transformed with the same params."""
    if params.flip:
        arr = arr[:, ::-1]
    return np.ascontiguousarray(
        arr[params.top : params.top + crop, params.left : params.left + crop]
    )


def augment(img: ImageSample, rng, crop=256, hflip_prob=0.5):
    """Random horizontal flip plus random crop; deterministic given rng."""
    params = sample_augment((img.height, img.width), crop, hflip_prob, rng)
    return ImageSample(apply_augment(img.pixels, params, crop), img.domain, img.id)


def sample_unpaired_batch(ds: UnpairedDataset, rng):
    """One image from each domain, drawn independently and uniformly."""
    if not ds.domain_a or not ds.domain_b:
        raise DataError("cannot sample from an empty domain")
    a = ds.domain_a[int(rng.integers(0, len(ds.domain_a)))]
    b = ds.domain_b[int(rng.integers(0, len(ds.domain_b)))]
    return a, b
