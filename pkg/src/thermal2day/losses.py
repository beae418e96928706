"""Training losses and their weighted aggregate.

Adversarial training uses the relativistic-average least-squares form over
the discriminator's three views. Cycle reconstruction combines L1 with a
structural-similarity penalty. The attention losses push the per-scale
attention maps toward a per-pixel partition of the scene (diversity) and
align same-scale attention features across domains while compacting them
within a scale (cross-domain similarity). The gradient alignment loss
penalizes generated images whose gradients at source edge locations fall
below a sharpness threshold.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .edges import gradient_magnitude, sample_edge_patch
from .errors import ConfigError

ATTENTION_GAP_EPS = 1e-6  # below this mean, an attention channel is degenerate
CONFIDENCE_EPS = 1e-8  # guards the scale-confidence normalizer


@dataclass(frozen=True)
class LossWeights:
    lambda_cyc: float = 10.0
    lambda_ssim: float = 1.0
    lambda_tv: float = 5.0
    lambda_att: float = 1.0
    lambda_sga: float = 0.5
    alpha: float = 0.5  # diversity loss: weight of the whole pixel term
    beta: float = 0.25  # diversity loss: weight of the completeness part

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ConfigError(f"loss weight {name} must be >= 0, got {value}")


def adversarial_losses(real_scores, fake_scores):
    """Relativistic-average least-squares losses, averaged over views.

    Each view's discriminator pushes real scores one above the mean fake
    score and fake scores one below the mean real score; the generator loss
    swaps the roles. Returns (generator_loss, discriminator_loss).
    """
    if torch.is_tensor(real_scores):
        real_scores, fake_scores = [real_scores], [fake_scores]
    if len(real_scores) != len(fake_scores):
        raise ValueError("mismatched number of score views")
    gen_terms = []
    disc_terms = []
    for dr, df in zip(real_scores, fake_scores):
        if dr.shape != df.shape:
            raise ValueError(f"score shape mismatch: {dr.shape} vs {df.shape}")
        disc_terms.append(
            ((dr - df.mean() - 1.0) ** 2).mean() + ((df - dr.mean() + 1.0) ** 2).mean()
        )
        gen_terms.append(
            ((df - dr.mean() - 1.0) ** 2).mean() + ((dr - df.mean() + 1.0) ** 2).mean()
        )
    n = len(gen_terms)
    return sum(gen_terms) / n, sum(disc_terms) / n


def _gaussian_window(size, sigma, dtype, device):
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(x, y, window_size=11, sigma=1.5, data_range=1.0):
    """Mean single-scale structural similarity of two (n, c, h, w) batches.

    11x11 Gaussian window (sigma 1.5), standard stabilizers, no padding, so
    inputs must be at least window_size on each side.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape[-2:]) < window_size:
        raise ValueError(f"inputs smaller than the {window_size}x{window_size} window")
    c = x.shape[1]
    window = _gaussian_window(window_size, sigma, x.dtype, x.device)
    window = window.expand(c, 1, window_size, window_size)

    def blur(t):
        return F.conv2d(t, window, groups=c)

    mu_x = blur(x)
    mu_y = blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return (num / den).mean()


def cycle_terms(x, x_rec, data_range=1.0):
    """(mean absolute error, structural dissimilarity) of a reconstruction."""
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    return (x - x_rec).abs().mean(), 1.0 - ssim(x, x_rec, data_range=data_range)


def cycle_loss(x, x_rec, weights: LossWeights, data_range=1.0):
    """Weighted L1 plus structural-dissimilarity reconstruction loss."""
    l1, dssim = cycle_terms(x, x_rec, data_range)
    return weights.lambda_cyc * l1 + weights.lambda_ssim * dssim


def tv_loss(img):
    """Mean absolute horizontal difference plus mean absolute vertical one."""
    if img.shape[-2] < 2 or img.shape[-1] < 2:
        raise ValueError(f"image too small for total variation: {tuple(img.shape)}")
    dh = (img[..., :, 1:] - img[..., :, :-1]).abs().mean()
    dv = (img[..., 1:, :] - img[..., :-1, :]).abs().mean()
    return dh + dv


def attention_diversity_loss(t, alpha=0.5, beta=0.25):
    """Push the stacked attention maps toward a per-pixel one-hot partition.

    Per pixel: (1 - max over scales) + beta * (sum over scales - 1)^2,
    averaged over pixels and scaled by alpha. Zero exactly when every pixel
    is one-hot across scales; bounded by 1 for 3 scales at alpha=1/2,
    beta=1/4.
    """
    exclusion = 1.0 - t.amax(dim=-3)
    completeness = (t.sum(dim=-3) - 1.0) ** 2
    return alpha * (exclusion + beta * completeness).mean()


def attention_feature(feat, t, eps=ATTENTION_GAP_EPS):
    """Attention-weighted mean features, one unit row per attention scale.

    feat is (n, c, h, w); t is (n, k, H, W) and is average-pooled to feat's
    resolution when larger. Row k is the t^k-weighted spatial mean of feat,
    L2-normalized. Channels whose attention mass or feature norm is
    degenerate yield zero rows instead of dividing by ~0.
    """
    if t.shape[-2:] != feat.shape[-2:]:
        t = F.adaptive_avg_pool2d(t, feat.shape[-2:])
    mass = t.mean(dim=(-2, -1))  # (n, k)
    weighted = torch.einsum("nchw,nkhw->nkc", feat, t) / (
        feat.shape[-2] * feat.shape[-1]
    )
    valid_mass = mass > eps
    raw = weighted / torch.where(valid_mass, mass, torch.ones_like(mass)).unsqueeze(-1)
    norms = raw.norm(dim=-1)
    valid = valid_mass & (norms > eps)
    safe = torch.where(valid, norms, torch.ones_like(norms)).unsqueeze(-1)
    return torch.where(valid.unsqueeze(-1), raw / safe, torch.zeros_like(raw))


def dis_term(v):
    """Mean off-diagonal cosine similarity of the rows, clamped at zero.

    v is (n, k, c) with unit (or zero) rows; zero means the rows point in
    mutually non-positive directions, one means they all coincide.
    """
    k = v.shape[-2]
    q = v @ v.transpose(-2, -1)
    off = q.sum(dim=(-2, -1)) - q.diagonal(dim1=-2, dim2=-1).sum(dim=-1)
    return torch.clamp(off / (k * (k - 1)), min=0.0).mean()


def scale_confidence(t_a, t_b):
    """Per-scale confidence: min of the two domains' attention maxima."""
    return torch.minimum(t_a.amax(dim=(-2, -1)), t_b.amax(dim=(-2, -1)))


def _relativity_term(v_real, v_fake, confidence):
    q = v_real @ v_fake.transpose(-2, -1)
    gap = q.amax(dim=-1) - q.diagonal(dim1=-2, dim2=-1)
    return (confidence * gap).sum(dim=-1) / (confidence.sum(dim=-1) + CONFIDENCE_EPS)


def cross_domain_similarity_loss(f_ra, f_rb, f_fa, f_fb, t_ra, t_rb):
    """Align same-scale attention features across domains, compact within.

    For each domain, the similarity matrix between the real image's
    attention features and the translated counterpart's (weighted by
    per-scale confidence) should peak on its diagonal, and each feature set
    should spread its rows apart. Inputs are encoder features of the real
    and translated images of both domains plus the real images' attention
    tensors. Always nonnegative.
    """
    v_rara = attention_feature(f_ra, t_ra)
    v_farb = attention_feature(f_fa, t_rb)
    v_rbrb = attention_feature(f_rb, t_rb)
    v_fbra = attention_feature(f_fb, t_ra)
    confidence = scale_confidence(t_ra, t_rb)
    loss_b = (
        _relativity_term(v_rbrb, v_fbra, confidence).mean()
        + dis_term(v_rbrb)
        + dis_term(v_fbra)
    )
    loss_a = (
        _relativity_term(v_rara, v_farb, confidence).mean()
        + dis_term(v_rara)
        + dis_term(v_farb)
    )
    return loss_a + loss_b


def gradient_alignment_patch_loss(edge_patch, grad_patch, threshold):
    """Shortfall of patch gradients against threshold-scaled edge strength.

    Both patches are already normalized to [0, 1] by their own maxima; the
    edge patch must contain at least one nonzero pixel. Zero when every edge
    pixel's gradient reaches threshold times its edge strength; equals the
    threshold when the gradient patch is identically zero.
    """
    support = edge_patch.sum()
    if support.item() <= 0:
        raise ValueError("edge patch has no edge pixels")
    shortfall = torch.clamp(threshold * edge_patch - grad_patch, min=0.0)
    return shortfall.sum() / support


def gradient_alignment_loss(
    edges_a, fake_b, edges_b, fake_a, threshold, patch_size, rng
):
    """Sampled-patch gradient alignment, summed over both directions.

    For each direction, one patch is drawn from the real image's edge map
    (probability proportional to edge density) and compared against the
    translation's gradient magnitude at the same location, both
    self-max-normalized. A direction whose edge map is empty contributes
    nothing and is counted in the returned skip count. Gradients flow into
    the translated images. Returns (loss, skipped_directions).
    """
    total = None
    skipped = 0
    for edge_map, fake in ((edges_a, fake_b), (edges_b, fake_a)):
        try:
            patch = sample_edge_patch(edge_map, patch_size, rng)
        except ValueError:
            skipped += 1
            continue
        grad = gradient_magnitude(fake)[0, 0]
        window = grad[
            patch.top : patch.top + patch_size,
            patch.left : patch.left + patch_size,
        ]
        window = window / torch.clamp(window.max(), min=1e-12)
        edge_vals = torch.from_numpy(patch.values).to(fake.dtype)
        term = gradient_alignment_patch_loss(edge_vals, window, threshold)
        total = term if total is None else total + term
    if total is None:
        total = fake_a.new_zeros(())
    return total, skipped


def total_objective(
    adv,
    cyc,
    ssim_term,
    tv,
    diversity,
    similarity,
    alignment,
    weights: LossWeights,
    ssim_gate=1.0,
    similarity_gate=1.0,
):
    """Weighted sum of all components with the late-start gates applied to
    the structural-similarity and cross-domain-similarity terms."""
    return (
        adv
        + weights.lambda_cyc * cyc
        + weights.lambda_ssim * ssim_gate * ssim_term
        + weights.lambda_tv * tv
        + weights.lambda_att * (diversity + similarity_gate * similarity)
        + weights.lambda_sga * alignment
    )
