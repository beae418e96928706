"""Flat key=value configuration: schema, file parsing, and overrides.

Every run is fully described by one flat config (plus CLI overrides, which
win). Unknown keys are rejected so typos fail loudly.
"""

from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import PreprocessConfig
from .errors import ConfigError
from .losses import LossWeights


def _to_bool(raw):
    lowered = str(raw).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass
class TrainConfig:
    # data
    dir_a: str = ""
    dir_b: str = ""
    out_dir: str = "out"
    skip_undecodable: bool = False
    # preprocessing / augmentation
    resize_w: int = 500
    resize_h: int = 400
    crop_w: int = 360
    crop_h: int = 288
    train_crop: int = 256
    hflip_prob: float = 0.5
    # model
    base_channels: int = 64
    disc_channels: int = 64
    # optimization
    epochs: int = 80
    epoch_iters: int = 0  # 0: one pass over the larger domain per epoch
    max_iters: int = 0  # 0: epochs * epoch_iters
    lr0: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 1
    seed: int = 0
    checkpoint_every: int = 1000
    sample_every: int = 1000
    gate_start_iter: int = 50000
    # loss weights
    lambda_cyc: float = 10.0
    lambda_ssim: float = 1.0
    lambda_tv: float = 5.0
    lambda_att: float = 1.0
    lambda_sga: float = 0.5
    alpha: float = 0.5
    beta: float = 0.25
    # edge maps
    patch_size: int = 32
    edge_high: float = 0.2

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if self.epochs <= 0 or self.epochs % 2 != 0:
            raise ConfigError(f"epochs must be positive and even, got {self.epochs}")
        if self.batch_size != 1:
            raise ConfigError("batch_size must be 1")
        if self.base_channels % 8 != 0 or self.base_channels <= 0:
            raise ConfigError(
                f"base_channels must be a positive multiple of 8, got {self.base_channels}"
            )
        if self.disc_channels <= 0:
            raise ConfigError("disc_channels must be positive")
        if self.train_crop < self.patch_size:
            raise ConfigError(
                f"train_crop {self.train_crop} smaller than patch_size {self.patch_size}"
            )
        if self.gate_start_iter < 0:
            raise ConfigError("gate_start_iter must be >= 0")
        if not 0.0 < self.edge_high < 1.0:
            raise ConfigError("edge_high must be in (0, 1)")
        self.preprocess()  # validates resize/crop relations

    def preprocess(self):
        return PreprocessConfig(
            resize_wh=(self.resize_w, self.resize_h),
            crop_wh=(self.crop_w, self.crop_h),
            train_crop=self.train_crop,
            hflip_prob=self.hflip_prob,
        )

    def weights(self):
        return LossWeights(
            lambda_cyc=self.lambda_cyc,
            lambda_ssim=self.lambda_ssim,
            lambda_tv=self.lambda_tv,
            lambda_att=self.lambda_att,
            lambda_sga=self.lambda_sga,
            alpha=self.alpha,
            beta=self.beta,
        )

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def desk_config(dir_a="", dir_b="", out_dir="out", seed=0):
    """Desk-scale defaults: 64x64 synthetic images, narrow networks, 2000
    iterations (100 even epochs of 20), gates opening at iteration 100."""
    return TrainConfig(
        dir_a=dir_a,
        dir_b=dir_b,
        out_dir=out_dir,
        resize_w=64,
        resize_h=64,
        crop_w=64,
        crop_h=64,
        train_crop=64,
        base_channels=8,
        disc_channels=8,
        epochs=100,
        epoch_iters=20,
        max_iters=2000,
        gate_start_iter=100,
        checkpoint_every=500,
        sample_every=500,
        seed=seed,
    )


def parse_value(key, raw):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key: {key!r}")
    target = _FIELD_TYPES[key]
    raw = str(raw).strip()
    try:
        if target in (bool, "bool"):
            return _to_bool(raw)
        if target in (int, "int"):
            return int(raw)
        if target in (float, "float"):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def load_config_file(path):
    """Read key=value lines ('#' comments and blanks ignored) into a dict."""
    values = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        values[key] = parse_value(key, raw)
    return values


def build_config(file_values=None, overrides=None):
    """Assemble a TrainConfig from file values and override pairs (which win)."""
    merged = {}
    for source in (file_values or {}), (overrides or {}):
        for key, value in source.items():
            merged[key] = parse_value(key, value) if isinstance(value, str) else value
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key: {key!r}")
    try:
        return TrainConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
