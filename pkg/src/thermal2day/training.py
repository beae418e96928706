"""Bidirectional training loop: translations, cycle reconstructions, loss
scheduling, optimizer stepping, checkpointing, and CSV logging.

One iteration samples an unpaired image from each domain, updates both
discriminators on detached translations, then updates both generators on
the full weighted objective. Everything stochastic flows through one seeded
numpy generator whose state is checkpointed, so a resumed run reproduces an
uninterrupted one bit-exactly.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage

from .checkpoint import load_archive, save_archive
from .config import TrainConfig
from .data import apply_augment, preprocess, sample_augment
from .edges import detect_edges, sharpness_threshold
from .errors import CheckpointError, ConfigError, DataError, DivergenceError
from .losses import (
    adversarial_losses,
    attention_diversity_loss,
    cross_domain_similarity_loss,
    cycle_terms,
    gradient_alignment_loss,
    total_objective,
    tv_loss,
)
from .networks import Generator, TripleViewDiscriminator

CSV_COLUMNS = [
    "iteration",
    "lr",
    "gate_ssim",
    "gate_sim",
    "adv",
    "cycle_l1",
    "cycle_ssim",
    "tv",
    "attention_diversity",
    "attention_similarity",
    "gradient_alignment",
    "alignment_skipped",
    "disc_a",
    "disc_b",
    "total",
]


def lr_at(epoch, cfg: TrainConfig):
    """Constant learning rate for the first half of training, then linear
    decay to zero at the final epoch."""
    if epoch < 0 or epoch > cfg.epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.epochs}]")
    half = cfg.epochs / 2.0
    if epoch < half:
        return cfg.lr0
    return cfg.lr0 * (cfg.epochs - epoch) / half


def loss_gates(iteration, cfg: TrainConfig):
    """(ssim_gate, similarity_gate): both 0 before gate_start_iter, 1 after."""
    if iteration < 0:
        raise ConfigError(f"iteration must be >= 0, got {iteration}")
    gate = 1.0 if iteration >= cfg.gate_start_iter else 0.0
    return gate, gate


@dataclass(frozen=True)
class PreparedSample:
    pixels: np.ndarray  # preprocessed (h, w, 3) float32 in [0, 1]
    edges: np.ndarray  # aligned binary edge map, (h, w) bool
    id: str


@dataclass(frozen=True)
class PreparedData:
    domain_a: list
    domain_b: list
    max_intensity: float
    threshold: float  # edge-sharpness threshold shared by both directions


def prepare_training_data(ds, cfg: TrainConfig, cache_dir=None):
    """Preprocess every image once and attach its cached binary edge map."""
    pre = cfg.preprocess()

    def build(samples):
        out = []
        for s in samples:
            p = preprocess(s, pre)
            e = detect_edges(p.pixels, high=cfg.edge_high, cache_dir=cache_dir)
            out.append(PreparedSample(p.pixels, e, s.id))
        return out

    return PreparedData(
        domain_a=build(ds.domain_a),
        domain_b=build(ds.domain_b),
        max_intensity=ds.max_intensity,
        threshold=sharpness_threshold(ds.max_intensity),
    )


def to_tensor(pixels):
    """(h, w, 3) float array to a (1, 3, h, w) float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1))).float().unsqueeze(0)


def to_image(tensor):
    """(1, 3, h, w) tensor back to an (h, w, 3) float32 array in [0, 1]."""
    arr = tensor.detach().cpu().numpy()[0].transpose(1, 2, 0)
    return np.clip(arr, 0.0, 1.0).astype(np.float32)


def translate_image(generator, pixels):
    """Translate one (h, w, 3) image of any size: edge-pad up to the
    encoder's divisible-by-16 requirement, translate, crop back."""
    h, w = pixels.shape[:2]
    ph = (-h) % 16
    pw = (-w) % 16
    padded = np.pad(pixels, ((0, ph), (0, pw), (0, 0)), mode="edge")
    with torch.no_grad():
        out = generator(to_tensor(padded))
    return to_image(out)[:h, :w]


class Trainer:
    """Owns both generators, both discriminators, their optimizers, and the
    seeded sampling stream."""

    def __init__(self, cfg: TrainConfig, data: PreparedData, out_dir=None):
        if not data.domain_a or not data.domain_b:
            raise DataError("both domains must be non-empty for training")
        self.cfg = cfg
        self.data = data
        self.out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
        self.iteration = 0

        torch.manual_seed(cfg.seed)  # parameter init, spectral-norm vectors
        self.g_ab = Generator(cfg.base_channels)
        self.g_ba = Generator(cfg.base_channels)
        self.d_a = TripleViewDiscriminator(cfg.disc_channels)
        self.d_b = TripleViewDiscriminator(cfg.disc_channels)
        betas = (cfg.beta1, cfg.beta2)
        self.opt_g = torch.optim.Adam(
            list(self.g_ab.parameters()) + list(self.g_ba.parameters()),
            lr=cfg.lr0,
            betas=betas,
        )
        self.opt_d = torch.optim.Adam(
            list(self.d_a.parameters()) + list(self.d_b.parameters()),
            lr=cfg.lr0,
            betas=betas,
        )
        self.rng = np.random.default_rng(cfg.seed)

    # -- scheduling --------------------------------------------------------

    @property
    def epoch_iters(self):
        return self.cfg.epoch_iters or max(len(self.data.domain_a), len(self.data.domain_b))

    @property
    def epoch(self):
        return self.iteration // self.epoch_iters

    @property
    def total_iters(self):
        return self.cfg.max_iters or self.cfg.epochs * self.epoch_iters

    def _apply_lr(self):
        lr = lr_at(min(self.epoch, self.cfg.epochs), self.cfg)
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    # -- one iteration -----------------------------------------------------

    def _sample_pair(self):
        cfg = self.cfg
        picks = []
        for pool in (self.data.domain_a, self.data.domain_b):
            sample = pool[int(self.rng.integers(0, len(pool)))]
            params = sample_augment(
                sample.pixels.shape[:2], cfg.train_crop, cfg.hflip_prob, self.rng
            )
            picks.append(
                (
                    apply_augment(sample.pixels, params, cfg.train_crop),
                    apply_augment(sample.edges, params, cfg.train_crop),
                )
            )
        return picks[0], picks[1]

    def _set_disc_grads(self, enabled):
        for module in (self.d_a, self.d_b):
            for p in module.parameters():
                p.requires_grad_(enabled)

    def train_step(self):
        """One full iteration; returns the loss record as python floats."""
        cfg = self.cfg
        weights = cfg.weights()
        lr = self._apply_lr()
        (img_a, edges_a), (img_b, edges_b) = self._sample_pair()
        x_a = to_tensor(img_a)
        x_b = to_tensor(img_b)

        f_ra, t_ra = self.g_ab.encode(x_a)
        x_fb = self.g_ab.decode(f_ra)
        f_rb, t_rb = self.g_ba.encode(x_b)
        x_fa = self.g_ba.decode(f_rb)

        # discriminators first, on detached translations
        self._set_disc_grads(True)
        self.opt_d.zero_grad(set_to_none=True)
        _, disc_b = adversarial_losses(self.d_b(x_b), self.d_b(x_fb.detach()))
        _, disc_a = adversarial_losses(self.d_a(x_a), self.d_a(x_fa.detach()))
        (disc_a + disc_b).backward()
        self.opt_d.step()

        # generators against the updated discriminators
        self._set_disc_grads(False)
        self.opt_g.zero_grad(set_to_none=True)
        gen_b, _ = adversarial_losses(self.d_b(x_b), self.d_b(x_fb))
        gen_a, _ = adversarial_losses(self.d_a(x_a), self.d_a(x_fa))
        adv = gen_a + gen_b

        f_fb, _ = self.g_ba.encode(x_fb)
        x_rec_a = self.g_ba.decode(f_fb)
        f_fa, _ = self.g_ab.encode(x_fa)
        x_rec_b = self.g_ab.decode(f_fa)

        # components whose weight is exactly zero are skipped and recorded
        # as zero, so an ablated run neither pays for nor logs them
        zero = x_a.new_zeros(())
        cyc = ssim_term = tv = diversity = similarity = alignment = zero
        skipped = 0
        if weights.lambda_cyc > 0 or weights.lambda_ssim > 0:
            l1_a, dssim_a = cycle_terms(x_a, x_rec_a)
            l1_b, dssim_b = cycle_terms(x_b, x_rec_b)
            if weights.lambda_cyc > 0:
                cyc = l1_a + l1_b
            if weights.lambda_ssim > 0:
                ssim_term = dssim_a + dssim_b
        if weights.lambda_tv > 0:
            tv = tv_loss(x_fb) + tv_loss(x_fa)
        if weights.lambda_att > 0:
            diversity = attention_diversity_loss(
                t_ra, cfg.alpha, cfg.beta
            ) + attention_diversity_loss(t_rb, cfg.alpha, cfg.beta)
            similarity = cross_domain_similarity_loss(
                f_ra, f_rb, f_fa, f_fb, t_ra, t_rb
            )
        if weights.lambda_sga > 0:
            alignment, skipped = gradient_alignment_loss(
                edges_a, x_fb, edges_b, x_fa,
                self.data.threshold, cfg.patch_size, self.rng,
            )
        gate_ssim, gate_sim = loss_gates(self.iteration, cfg)

        total = total_objective(
            adv, cyc, ssim_term, tv, diversity, similarity, alignment,
            weights, gate_ssim, gate_sim,
        )
        record = {
            "iteration": self.iteration,
            "lr": lr,
            "gate_ssim": gate_ssim,
            "gate_sim": gate_sim,
            "adv": adv.item(),
            "cycle_l1": cyc.item(),
            "cycle_ssim": ssim_term.item(),
            "tv": tv.item(),
            "attention_diversity": diversity.item(),
            "attention_similarity": similarity.item(),
            "gradient_alignment": alignment.item(),
            "alignment_skipped": skipped,
            "disc_a": disc_a.item(),
            "disc_b": disc_b.item(),
        }
        for name in ("adv", "cycle_l1", "cycle_ssim", "tv", "attention_diversity",
                     "attention_similarity", "gradient_alignment", "disc_a", "disc_b"):
            if not math.isfinite(record[name]):
                raise DivergenceError(self.iteration, name, record)
        # the recorded total is the same weighted sum evaluated in float64
        # from the recorded components, so it is exactly linear in them
        record["total"] = total_objective(
            record["adv"], record["cycle_l1"], record["cycle_ssim"], record["tv"],
            record["attention_diversity"], record["attention_similarity"],
            record["gradient_alignment"], weights, gate_ssim, gate_sim,
        )

        total.backward()
        self.opt_g.step()
        self.iteration += 1
        return record

    # -- evaluation helpers --------------------------------------------------

    def cycle_reconstruction_error(self, pixels_a, pixels_b):
        """Mean L1 cycle error of a fixed pair, averaged over both directions."""
        with torch.no_grad():
            x_a = to_tensor(pixels_a)
            x_b = to_tensor(pixels_b)
            rec_a = self.g_ba(self.g_ab(x_a))
            rec_b = self.g_ab(self.g_ba(x_b))
            err = 0.5 * ((x_a - rec_a).abs().mean() + (x_b - rec_b).abs().mean())
        return float(err)

    # -- checkpointing -------------------------------------------------------

    _MODEL_KEYS = ("g_ab", "g_ba", "d_a", "d_b")
    _OPT_KEYS = ("opt_g", "opt_d")

    def _gather_tensors(self):
        tensors = {}
        for name in self._MODEL_KEYS:
            for key, value in getattr(self, name).state_dict().items():
                tensors[f"{name}.{key}"] = value.detach().cpu().numpy()
        opt_meta = {}
        for name in self._OPT_KEYS:
            sd = getattr(self, name).state_dict()
            scalars = {}
            for idx, state in sd["state"].items():
                for field, value in state.items():
                    if torch.is_tensor(value):
                        tensors[f"{name}.state.{idx}.{field}"] = (
                            value.detach().cpu().numpy()
                        )
                    else:
                        scalars[f"{idx}.{field}"] = value
            opt_meta[name] = {"param_groups": sd["param_groups"], "scalars": scalars}
        tensors["torch_rng"] = torch.get_rng_state().numpy()
        return tensors, opt_meta

    def save_checkpoint(self, path):
        tensors, opt_meta = self._gather_tensors()
        meta = {
            "kind": "training-checkpoint",
            "iteration": self.iteration,
            "config": self.cfg.as_dict(),
            "optimizers": opt_meta,
            "numpy_rng": self.rng.bit_generator.state,
        }
        save_archive(path, tensors, meta)

    def _restore(self, tensors, meta):
        buckets = {name: {} for name in self._MODEL_KEYS}
        opt_states = {name: {} for name in self._OPT_KEYS}
        for key, arr in tensors.items():
            head, _, rest = key.partition(".")
            if head in buckets:
                buckets[head][rest] = torch.from_numpy(arr.copy())
            elif head in opt_states:
                _, idx, field = rest.split(".", 2)
                opt_states[head].setdefault(int(idx), {})[field] = torch.from_numpy(
                    arr.copy()
                )
        for name in self._MODEL_KEYS:
            getattr(self, name).load_state_dict(buckets[name], strict=True)
        for name in self._OPT_KEYS:
            opt_meta = meta["optimizers"][name]
            state = opt_states[name]
            for key, value in opt_meta["scalars"].items():
                idx, field = key.split(".", 1)
                state.setdefault(int(idx), {})[field] = value
            getattr(self, name).load_state_dict(
                {"state": state, "param_groups": opt_meta["param_groups"]}
            )
        torch.set_rng_state(torch.from_numpy(tensors["torch_rng"].copy()))
        self.rng.bit_generator.state = meta["numpy_rng"]
        self.iteration = int(meta["iteration"])

    @classmethod
    def load(cls, path, data: PreparedData, out_dir=None):
        tensors, meta = load_archive(path)
        if meta.get("kind") != "training-checkpoint":
            raise CheckpointError(f"{path} is not a training checkpoint")
        cfg = TrainConfig(**meta["config"])
        trainer = cls(cfg, data, out_dir=out_dir)
        trainer._restore(tensors, meta)
        return trainer

    # -- the loop ------------------------------------------------------------

    def _layout(self):
        dirs = {
            name: self.out_dir / name
            for name in ("checkpoints", "samples", "logs", "reports")
        }
        for d in dirs.values():
            d.mkdir(parents=True, exist_ok=True)
        return dirs

    def _write_samples(self, samples_dir):
        a = self.data.domain_a[0].pixels
        b = self.data.domain_b[0].pixels
        with torch.no_grad():
            x_a, x_b = to_tensor(a), to_tensor(b)
            fake_b = self.g_ab(x_a)
            fake_a = self.g_ba(x_b)
            rec_a = self.g_ba(fake_b)
            rec_b = self.g_ab(fake_a)
            _, t_a = self.g_ab.encode(x_a)
        row_a = np.concatenate([a, to_image(fake_b), to_image(rec_a)], axis=1)
        row_b = np.concatenate([b, to_image(fake_a), to_image(rec_b)], axis=1)
        grid = np.concatenate([row_a, row_b], axis=0)
        PILImage.fromarray(np.round(grid * 255.0).astype(np.uint8)).save(
            samples_dir / f"iter_{self.iteration:06d}.png"
        )
        maps = np.concatenate(list(t_a[0].numpy()), axis=1)
        PILImage.fromarray(np.round(np.clip(maps, 0, 1) * 255.0).astype(np.uint8)).save(
            samples_dir / f"attention_{self.iteration:06d}.png"
        )

    def run(self, max_iters=None, write_outputs=True):
        """Train until max_iters (default: the configured total); returns the
        per-iteration loss records."""
        target = max_iters if max_iters is not None else self.total_iters
        records = []
        dirs = self._layout() if write_outputs else None
        csv_path = dirs["logs"] / "losses.csv" if write_outputs else None
        fh = None
        writer = None
        if csv_path is not None:
            new_file = not csv_path.exists() or csv_path.stat().st_size == 0
            fh = open(csv_path, "a", newline="")
            writer = csv.writer(fh)
            if new_file:
                writer.writerow(CSV_COLUMNS)
        try:
            while self.iteration < target:
                record = self.train_step()
                records.append(record)
                if writer is not None:
                    writer.writerow([repr(record[c]) for c in CSV_COLUMNS])
                    fh.flush()
                at_boundary = (
                    self.iteration % self.cfg.checkpoint_every == 0
                    or self.iteration >= target
                )
                if write_outputs and at_boundary:
                    self.save_checkpoint(
                        dirs["checkpoints"] / f"iter_{self.iteration:06d}.ckpt"
                    )
                if write_outputs and (
                    self.iteration % self.cfg.sample_every == 0
                    or self.iteration >= target
                ):
                    self._write_samples(dirs["samples"])
        finally:
            if fh is not None:
                fh.close()
        return records


def save_checkpoint(trainer: Trainer, path):
    trainer.save_checkpoint(path)


def load_checkpoint(path, data: PreparedData, out_dir=None):
    return Trainer.load(path, data, out_dir=out_dir)


def load_generators(path):
    """Rebuild just the generator pair from a checkpoint (for translation)."""
    tensors, meta = load_archive(path)
    if "config" not in meta:
        raise CheckpointError(f"{path} carries no model configuration")
    cfg = TrainConfig(**meta["config"])
    g_ab = Generator(cfg.base_channels)
    g_ba = Generator(cfg.base_channels)
    for name, model in (("g_ab", g_ab), ("g_ba", g_ba)):
        state = {
            key[len(name) + 1 :]: torch.from_numpy(arr.copy())
            for key, arr in tensors.items()
            if key.startswith(name + ".")
        }
        model.load_state_dict(state, strict=True)
        model.eval()
    return g_ab, g_ba, cfg
