"""Top-down guided spatial attention over grouped multi-scale features.

A channel-preserving conv splits features into four groups; stacked 2x
average pooling turns the groups into a four-level pyramid; attention maps
are predicted coarse-to-fine, each scale gated by the upsampled map of the
coarser scale; the maps then gate their groups at full resolution. The three
finer maps, upsampled and stacked, form the attention tensor consumed by the
attention losses.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

N_SCALES = 4
STACKED_SCALES = 3  # finer scales whose maps enter the stacked tensor


def upsample(x, factor):
    # nearest-neighbor: keeps sigmoid outputs strictly inside (0, 1)
    return F.interpolate(x, scale_factor=factor, mode="nearest")


class AttentionHead(nn.Module):
    """3x3 convolution to one channel followed by sigmoid."""

    def __init__(self, in_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, 1, kernel_size=3, padding=1)

    def forward(self, x):
        return torch.sigmoid(self.conv(x))


class TopDownAttention(nn.Module):
    """Coarse-to-fine attention with per-scale heads and grouped gating.

    Input and output are (n, c, h, w) with c divisible by 4 and h, w
    divisible by 16; spatial size and channel count are preserved.
    """

    def __init__(self, channels):
        super().__init__()
        if channels % N_SCALES != 0:
            raise ValueError(f"channels must be divisible by 4, got {channels}")
        self.channels = channels
        self.pre_split = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        # heads[s - 1] serves pyramid scale s; no weight sharing across scales
        self.heads = nn.ModuleList(
            AttentionHead(channels // N_SCALES) for _ in range(N_SCALES)
        )

    def split_features(self, x):
        """Mix channels with one conv, then partition into 4 equal groups."""
        c = x.shape[1]
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        return list(torch.chunk(self.pre_split(x), N_SCALES, dim=1))

    @staticmethod
    def build_pyramid(groups):
        """Level s: group s average-pooled s times with 2x2 windows."""
        h, w = groups[0].shape[-2:]
        if h % 16 != 0 or w % 16 != 0:
            raise ValueError(f"spatial dims must be divisible by 16, got {h}x{w}")
        levels = []
        for s, g in enumerate(groups, start=1):
            for _ in range(s):
                g = F.avg_pool2d(g, kernel_size=2, stride=2)
            levels.append(g)
        return levels

    def cascade_attention(self, pyramid):
        """Predict maps coarse-to-fine; each scale is gated by the coarser map.

        Returns maps ordered coarsest first: [a4, a3, a2, a1].
        """
        coarsest = self.heads[N_SCALES - 1](pyramid[N_SCALES - 1])
        maps = [coarsest]
        for s in range(N_SCALES - 1, 0, -1):
            level = pyramid[s - 1]
            gated = level + level * upsample(maps[-1], 2)
            maps.append(self.heads[s - 1](gated))
        return maps

    @staticmethod
    def enhance(groups, maps):
        """Gate each group with its upsampled map and concatenate, coarsest
        group first."""
        parts = []
        for s in range(N_SCALES, 0, -1):
            g = groups[s - 1]
            parts.append(g + g * upsample(maps[N_SCALES - s], 2**s))
        return torch.cat(parts, dim=1)

    @staticmethod
    def stack_maps(maps):
        """Stack the three finer maps at full resolution: (n, 3, h, w)."""
        return torch.cat(
            [upsample(maps[N_SCALES - s], 2**s) for s in range(STACKED_SCALES, 0, -1)],
            dim=1,
        )

    def forward(self, x):
        """Returns (enhanced features, stacked attention tensor, maps).

        Enhanced features match x's shape; maps are ordered coarsest first.
        """
        groups = self.split_features(x)
        pyramid = self.build_pyramid(groups)
        maps = self.cascade_attention(pyramid)
        return self.enhance(groups, maps), self.stack_maps(maps), maps
