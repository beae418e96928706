"""Independent reference implementations used as test oracles.

Each function re-derives an expected value by a route separate from the
package code: plain numpy/scipy arithmetic, literal per-element loops, or
set operations. They stay free of the modules they check.
"""

import numpy as np
from scipy.signal import correlate2d


def relativistic_oracle(reals, fakes):
    """Direct formula evaluation of the relativistic-average LS losses."""
    gen, disc = [], []
    for dr, df in zip(reals, fakes):
        disc.append(((dr - df.mean() - 1) ** 2).mean() + ((df - dr.mean() + 1) ** 2).mean())
        gen.append(((df - dr.mean() - 1) ** 2).mean() + ((dr - df.mean() + 1) ** 2).mean())
    return float(np.mean(gen)), float(np.mean(disc))


def ssim_oracle(x, y, data_range=1.0):
    """Reference single-scale SSIM: 11x11 Gaussian (sigma 1.5), valid mode."""
    coords = np.arange(11) - 5.0
    g = np.exp(-(coords**2) / (2.0 * 1.5**2))
    g /= g.sum()
    window = np.outer(g, g)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    maps = []
    for n in range(x.shape[0]):
        for c in range(x.shape[1]):
            xs, ys = x[n, c], y[n, c]
            mx = correlate2d(xs, window, mode="valid")
            my = correlate2d(ys, window, mode="valid")
            vx = correlate2d(xs * xs, window, mode="valid") - mx * mx
            vy = correlate2d(ys * ys, window, mode="valid") - my * my
            cov = correlate2d(xs * ys, window, mode="valid") - mx * my
            maps.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx**2 + my**2 + c1) * (vx + vy + c2))
            )
    return float(np.mean(maps))


def similarity_chain_oracle(f_ra, f_rb, f_fa, f_fb, t_ra, t_rb, eps=1e-6):
    """Literal evaluation of the cross-domain attention similarity loss:
    weighted means, normalization, cosine matrices, confidence weighting,
    and the spread terms, in plain numpy."""

    def pool(t, hw):
        k, big_h, big_w = t.shape
        h, w = hw
        return t.reshape(k, h, big_h // h, w, big_w // w).mean(axis=(2, 4))

    def rows(feat, t):
        c = feat.shape[0]
        t = pool(t, feat.shape[1:])
        out = []
        for k in range(t.shape[0]):
            mass = t[k].mean()
            if mass <= eps:
                out.append(np.zeros(c))
                continue
            v = (feat * t[k]).mean(axis=(1, 2)) / mass
            norm = np.linalg.norm(v)
            out.append(v / norm if norm > eps else np.zeros(c))
        return np.stack(out)

    def spread(v):
        q = v @ v.T
        k = v.shape[0]
        return max((q.sum() - np.trace(q)) / (k * (k - 1)), 0.0)

    wq = np.minimum(t_ra.max(axis=(1, 2)), t_rb.max(axis=(1, 2)))

    def relativity(v_real, v_fake):
        q = v_real @ v_fake.T
        gap = q.max(axis=1) - np.diag(q)
        return (wq * gap).sum() / (wq.sum() + 1e-8)

    v_rara = rows(f_ra, t_ra)
    v_farb = rows(f_fa, t_rb)
    v_rbrb = rows(f_rb, t_rb)
    v_fbra = rows(f_fb, t_ra)
    loss_a = relativity(v_rara, v_farb) + spread(v_rara) + spread(v_farb)
    loss_b = relativity(v_rbrb, v_fbra) + spread(v_rbrb) + spread(v_fbra)
    return loss_a + loss_b


def patch_shortfall_oracle(pe, pg, threshold):
    """Elementwise evaluation of the edge-gradient shortfall ratio."""
    return float(np.maximum(threshold * pe - pg, 0.0).sum() / pe.sum())


def apce_set_oracle(sources, outputs, sweep):
    """Brute-force edge-precision average: per (image, threshold), pixel
    coordinate sets from independent full detector runs, |X & Y| / |X|
    averaged over pairs with nonempty X."""
    from thermal2day.canny import canny
    from thermal2day.edges import to_gray

    precisions = []
    skipped = 0
    for src, out in zip(sources, outputs):
        for mu in sweep.highs:
            x_set = {
                tuple(p)
                for p in np.argwhere(canny(to_gray(np.asarray(src, float)), mu, mu * sweep.low_ratio))
            }
            y_set = {
                tuple(p)
                for p in np.argwhere(canny(to_gray(np.asarray(out, float)), mu, mu * sweep.low_ratio))
            }
            if not x_set:
                skipped += 1
                continue
            precisions.append(len(x_set & y_set) / len(x_set))
    return sum(precisions) / len(precisions), skipped
