"""Generators and triple-view spectral-normalized patch discriminators.

The generator is a residual encoder-decoder: 7x7 stem, two stride-2
downsamplings, top-down attention plus 4 residual blocks (encoder), then
top-down attention plus 5 residual blocks, two upsamplings whose
normalizations are group norm, and a 7x7 tanh head (decoder). Images cross
the public API in [0, 1]; the [-1, 1] mapping is internal.

Each discriminator scores three views of its input (color, luminance,
gradient magnitude) with separate patch networks, every convolution wrapped
in spectral normalization.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import spectral_norm

from .attention import TopDownAttention, upsample
from .edges import gradient_magnitude

GROUP_NORM_GROUPS = 8
ATTENTION_MULTIPLE = 16  # spatial multiple required by the attention pyramid


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


def _pad_to_multiple(x, multiple):
    """Replicate-pad bottom/right so both spatial dims divide `multiple`."""
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x, (h, w)
    return F.pad(x, (0, pw, 0, ph), mode="replicate"), (h, w)


class Generator(nn.Module):
    """One translation direction: encoder of the source domain, decoder of
    the target domain."""

    DOWNSCALE = 4  # two stride-2 downsamplings

    def __init__(self, base_channels=64):
        super().__init__()
        if base_channels % GROUP_NORM_GROUPS != 0:
            raise ValueError(
                f"base_channels must be divisible by {GROUP_NORM_GROUPS}, "
                f"got {base_channels}"
            )
        c1 = base_channels
        c2 = base_channels * 2
        c4 = base_channels * 4

        self.stem = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, c1, kernel_size=7),
            nn.InstanceNorm2d(c1),
            nn.ReLU(inplace=True),
        )
        self.down = nn.Sequential(
            nn.Conv2d(c1, c2, kernel_size=3, stride=2, padding=1),
            nn.InstanceNorm2d(c2),
            nn.ReLU(inplace=True),
            nn.Conv2d(c2, c4, kernel_size=3, stride=2, padding=1),
            nn.InstanceNorm2d(c4),
            nn.ReLU(inplace=True),
        )
        self.encoder_attention = TopDownAttention(c4)
        self.encoder_blocks = nn.Sequential(*(ResidualBlock(c4) for _ in range(4)))

        self.decoder_attention = TopDownAttention(c4)
        self.decoder_blocks = nn.Sequential(*(ResidualBlock(c4) for _ in range(5)))
        # the final two normalizations are group norm instead of instance
        # norm, which suppresses color-dot artifacts in the output
        self.up = nn.Sequential(
            nn.ConvTranspose2d(c4, c2, kernel_size=3, stride=2, padding=1, output_padding=1),
            nn.GroupNorm(GROUP_NORM_GROUPS, c2),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(c2, c1, kernel_size=3, stride=2, padding=1, output_padding=1),
            nn.GroupNorm(GROUP_NORM_GROUPS, c1),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(c1, 3, kernel_size=7),
            nn.Tanh(),
        )

    def _attend(self, module, feat):
        """Run attention on features padded to the pyramid multiple, then
        crop the outputs back; lets any divisible-by-16 image size through."""
        padded, (h, w) = _pad_to_multiple(feat, ATTENTION_MULTIPLE)
        enhanced, stacked, _ = module(padded)
        return enhanced[..., :h, :w], stacked[..., :h, :w]

    def encode(self, x):
        """Post-residual encoder features and the attention tensor upsampled
        to input resolution: ((n, 4c, h/4, w/4), (n, 3, h, w))."""
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (n, 3, h, w) input, got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if h % ATTENTION_MULTIPLE or w % ATTENTION_MULTIPLE:
            raise ValueError(f"spatial dims must be divisible by 16, got {h}x{w}")
        feat = self.stem(x * 2.0 - 1.0)
        feat = self.down(feat)
        feat, stacked = self._attend(self.encoder_attention, feat)
        feat = self.encoder_blocks(feat)
        return feat, upsample(stacked, self.DOWNSCALE)

    def decode(self, feat):
        """Features back to a [0, 1] image at DOWNSCALE times their size."""
        feat, _ = self._attend(self.decoder_attention, feat)
        feat = self.decoder_blocks(feat)
        feat = self.up(feat)
        return (self.head(feat) + 1.0) * 0.5

    def forward(self, x):
        feat, _ = self.encode(x)
        return self.decode(feat)


class PatchDiscriminator(nn.Module):
    """70x70 receptive-field patch scorer; spectral norm on every conv."""

    def __init__(self, in_channels, base_channels=64):
        super().__init__()
        c = base_channels
        self.layers = nn.Sequential(
            spectral_norm(nn.Conv2d(in_channels, c, 4, stride=2, padding=1)),
            nn.LeakyReLU(0.2, inplace=True),
            spectral_norm(nn.Conv2d(c, c * 2, 4, stride=2, padding=1)),
            nn.InstanceNorm2d(c * 2),
            nn.LeakyReLU(0.2, inplace=True),
            spectral_norm(nn.Conv2d(c * 2, c * 4, 4, stride=2, padding=1)),
            nn.InstanceNorm2d(c * 4),
            nn.LeakyReLU(0.2, inplace=True),
            spectral_norm(nn.Conv2d(c * 4, c * 8, 4, stride=1, padding=1)),
            nn.InstanceNorm2d(c * 8),
            nn.LeakyReLU(0.2, inplace=True),
            spectral_norm(nn.Conv2d(c * 8, 1, 4, stride=1, padding=1)),
        )

    def forward(self, x):
        return self.layers(x)


class TripleViewDiscriminator(nn.Module):
    """Scores color, luminance, and gradient-magnitude views of a [0, 1]
    image with independent patch networks."""

    def __init__(self, base_channels=64):
        super().__init__()
        self.color = PatchDiscriminator(3, base_channels)
        self.luminance = PatchDiscriminator(1, base_channels)
        self.gradient = PatchDiscriminator(1, base_channels)

    @staticmethod
    def views(x):
        signed = x * 2.0 - 1.0
        return [
            signed,
            signed.mean(dim=1, keepdim=True),
            gradient_magnitude(x),
        ]

    def forward(self, x):
        color, lum, grad = self.views(x)
        return [self.color(color), self.luminance(lum), self.gradient(grad)]
