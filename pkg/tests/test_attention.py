import numpy as np
import pytest
import torch
import torch.nn.functional as F

from thermal2day.attention import AttentionHead, TopDownAttention, upsample

from fd import check_gradient


def naive_conv3x3_sigmoid(x, weight, bias):
    """Loop-based oracle for a 3x3 single-output conv (zero padding) plus
    sigmoid; x is (c, h, w) numpy."""
    c, h, w = x.shape
    padded = np.zeros((c, h + 2, w + 2))
    padded[:, 1:-1, 1:-1] = x
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = bias
            for ci in range(c):
                for di in range(3):
                    for dj in range(3):
                        acc += weight[ci, di, dj] * padded[ci, i + di, j + dj]
            out[i, j] = 1.0 / (1.0 + np.exp(-acc))
    return out


class TestSplit:
    def test_groups_of_quarter_channels(self):
        m = TopDownAttention(8)
        groups = m.split_features(torch.randn(1, 8, 4, 4))
        assert [g.shape for g in groups] == [(1, 2, 4, 4)] * 4 == [
            torch.Size([1, 2, 4, 4])
        ] * 4

    def test_wide_input(self):
        m = TopDownAttention(256)
        groups = m.split_features(torch.randn(1, 256, 16, 16))
        assert all(g.shape[1] == 64 for g in groups)

    def test_indivisible_channels_rejected(self):
        with pytest.raises(ValueError, match="divisible by 4"):
            TopDownAttention(6)

    def test_groups_concat_to_presplit(self):
        m = TopDownAttention(8)
        x = torch.randn(1, 8, 16, 16)
        groups = m.split_features(x)
        torch.testing.assert_close(torch.cat(groups, dim=1), m.pre_split(x))


class TestPyramid:
    def test_constant_groups_stay_constant(self):
        groups = [torch.full((1, 2, 16, 16), 0.7) for _ in range(4)]
        levels = TopDownAttention.build_pyramid(groups)
        for s, level in enumerate(levels, start=1):
            assert level.shape[-2:] == (16 // 2**s, 16 // 2**s)
            torch.testing.assert_close(level, torch.full_like(level, 0.7))

    def test_level4_spatial(self):
        groups = [torch.randn(1, 2, 32, 32) for _ in range(4)]
        levels = TopDownAttention.build_pyramid(groups)
        assert levels[3].shape[-2:] == (2, 2)

    def test_hand_average_blocks(self):
        # 1..16 row-major in the top-left 4x4; one pooling averages each
        # 2x2 block: [[3.5, 5.5], [11.5, 13.5]]
        g0 = torch.zeros(1, 1, 16, 16)
        g0[0, 0, :4, :4] = torch.arange(1.0, 17.0).reshape(4, 4)
        groups = [g0] + [torch.zeros(1, 1, 16, 16) for _ in range(3)]
        level1 = TopDownAttention.build_pyramid(groups)[0]
        expected = torch.tensor([[3.5, 5.5], [11.5, 13.5]])
        torch.testing.assert_close(level1[0, 0, :2, :2], expected)

    def test_indivisible_spatial_rejected(self):
        groups = [torch.randn(1, 2, 12, 12) for _ in range(4)]
        with pytest.raises(ValueError, match="divisible by 16"):
            TopDownAttention.build_pyramid(groups)


class TestAttentionHead:
    def test_zero_parameters_give_half(self):
        head = AttentionHead(4)
        with torch.no_grad():
            head.conv.weight.zero_()
            head.conv.bias.zero_()
        out = head(torch.randn(1, 4, 8, 8))
        torch.testing.assert_close(out, torch.full_like(out, 0.5))

    def test_large_bias_saturates(self):
        head = AttentionHead(4).double()
        with torch.no_grad():
            head.conv.weight.zero_()
            head.conv.bias.fill_(20.0)
        out = head(torch.randn(1, 4, 8, 8, dtype=torch.float64))
        assert ((1.0 - out).abs() < 1e-8).all()
        assert (out < 1.0).all()

    def test_matches_naive_convolution(self):
        torch.manual_seed(3)
        head = AttentionHead(3).double()
        x = torch.randn(1, 3, 6, 7, dtype=torch.float64)
        expected = naive_conv3x3_sigmoid(
            x[0].numpy(),
            head.conv.weight.detach().numpy()[0],
            float(head.conv.bias.detach()),
        )
        np.testing.assert_allclose(head(x)[0, 0].detach().numpy(), expected, atol=1e-12)

    def test_output_strictly_inside_unit_interval(self):
        # strictness is exact in double precision; float32 can round the
        # saturated tail to 1.0
        torch.manual_seed(1)
        head = AttentionHead(8).double()
        out = head(torch.randn(2, 8, 16, 16, dtype=torch.float64) * 10)
        assert (out > 0).all() and (out < 1).all()


def cascade_oracle(module, pyramid):
    """Literal step-by-step evaluation of the coarse-to-fine recursion."""
    maps = [module.heads[3](pyramid[3])]
    for s in (3, 2, 1):
        level = pyramid[s - 1]
        prior = F.interpolate(maps[-1], scale_factor=2, mode="nearest")
        maps.append(module.heads[s - 1](level + level * prior))
    return maps


class TestCascade:
    def test_zero_pyramid_gives_uniform_bias_maps(self):
        torch.manual_seed(0)
        m = TopDownAttention(8)
        pyramid = TopDownAttention.build_pyramid(
            [torch.zeros(1, 2, 32, 32) for _ in range(4)]
        )
        maps = m.cascade_attention(pyramid)
        for s, amap in zip((4, 3, 2, 1), maps):
            expected = torch.sigmoid(m.heads[s - 1].conv.bias.detach()).item()
            torch.testing.assert_close(amap, torch.full_like(amap, expected))

    def test_zero_prior_reduces_to_plain_head(self):
        torch.manual_seed(2)
        m = TopDownAttention(8)
        level = torch.randn(1, 2, 8, 8)
        zero_prior = torch.zeros(1, 1, 4, 4)
        gated = level + level * upsample(zero_prior, 2)
        torch.testing.assert_close(m.heads[2](gated), m.heads[2](level))

    def test_matches_sequential_oracle(self):
        torch.manual_seed(4)
        m = TopDownAttention(16).double()
        pyramid = TopDownAttention.build_pyramid(
            [torch.randn(1, 4, 32, 32, dtype=torch.float64) for _ in range(4)]
        )
        got = m.cascade_attention(pyramid)
        expected = cascade_oracle(m, pyramid)
        for g, e in zip(got, expected):
            torch.testing.assert_close(g, e)


class TestForward:
    def test_zero_attention_is_reversed_concat(self):
        torch.manual_seed(5)
        m = TopDownAttention(8)
        x = torch.randn(1, 8, 16, 16)
        groups = m.split_features(x)
        zero_maps = [
            torch.zeros(1, 1, 16 // 2**s, 16 // 2**s) for s in (4, 3, 2, 1)
        ]
        enhanced = TopDownAttention.enhance(groups, zero_maps)
        expected = torch.cat([groups[3], groups[2], groups[1], groups[0]], dim=1)
        assert torch.equal(enhanced, expected)

    def test_shape_preservation_random_sizes(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            c = int(rng.integers(2, 65)) * 4
            h = int(rng.integers(1, 5)) * 16
            w = int(rng.integers(1, 5)) * 16
            m = TopDownAttention(c)
            out, stacked, maps = m(torch.randn(1, c, h, w))
            assert out.shape == (1, c, h, w)
            assert stacked.shape == (1, 3, h, w)
            assert len(maps) == 4

    def test_stacked_channel_order(self):
        # distinct constants per scale land in channels ordered
        # (scale3, scale2, scale1)
        h = w = 32
        maps = [
            torch.full((1, 1, h // 2**s, w // 2**s), v)
            for s, v in zip((4, 3, 2, 1), (0.2, 0.3, 0.4, 0.5))
        ]
        stacked = TopDownAttention.stack_maps(maps)
        assert stacked.shape == (1, 3, h, w)
        for k, v in enumerate((0.3, 0.4, 0.5)):
            torch.testing.assert_close(
                stacked[:, k], torch.full_like(stacked[:, k], v)
            )

    def test_values_strictly_in_unit_interval(self):
        torch.manual_seed(6)
        m = TopDownAttention(16).double()
        _, stacked, maps = m(torch.randn(1, 16, 32, 32, dtype=torch.float64) * 5)
        assert (stacked > 0).all() and (stacked < 1).all()
        for amap in maps:
            assert (amap > 0).all() and (amap < 1).all()

    def test_finite_difference_gradients(self):
        torch.manual_seed(8)
        m = TopDownAttention(8).double()
        x = torch.randn(1, 8, 16, 16, dtype=torch.float64)
        check_gradient(
            lambda inp: m(inp)[0].sum(), x, np.random.default_rng(0), n_points=10
        )
