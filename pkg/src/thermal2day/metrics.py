"""Evaluation metrics: edge-consistency over a Canny threshold sweep (apce)
and confusion-matrix mean IoU for label grids."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import canny
from .edges import to_gray


@dataclass(frozen=True)
class ThresholdSweep:
    """High thresholds 0.01..0.99 step 0.01; low is always high * low_ratio."""

    highs: tuple = field(
        default_factory=lambda: tuple(round(0.01 * j, 2) for j in range(1, 100))
    )
    low_ratio: float = 0.5

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.highs, self.highs[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if not all(0.0 < t < 1.0 for t in self.highs):
            raise ValueError("thresholds must lie in (0, 1)")


@dataclass(frozen=True)
class MetricReport:
    apce: float
    per_threshold_precision: list  # (threshold, mean precision or None) pairs
    skipped_pairs: int
    n_images: int
    n_thresholds: int


def _edge_sets(pixels, sweep: ThresholdSweep):
    """Edge maps of one image at every sweep threshold (thinning reused)."""
    thinned, norm = canny.thin_gradient(to_gray(pixels))
    return [
        canny.hysteresis(thinned, norm, mu, mu * sweep.low_ratio) for mu in sweep.highs
    ]


def apce(sources, outputs, sweep=None):
    """Mean precision of output Canny edges against source edges, averaged
    over images and thresholds.

    For each image and threshold, precision is |source edges kept in the
    output| / |source edges|. Pairs whose source edge set is empty are
    excluded and the average renormalized over the rest; their count is
    reported. Identity corpora score exactly 1, constant outputs exactly 0.
    """
    sweep = sweep or ThresholdSweep()
    if len(sources) != len(outputs):
        raise ValueError(f"{len(sources)} sources vs {len(outputs)} outputs")
    if not sources:
        raise ValueError("empty image lists")

    per_threshold = [[] for _ in sweep.highs]
    skipped = 0
    total = 0.0
    included = 0
    for src, out in zip(sources, outputs):
        if src.shape[:2] != out.shape[:2]:
            raise ValueError(f"dimension mismatch: {src.shape} vs {out.shape}")
        src_sets = _edge_sets(src, sweep)
        out_sets = _edge_sets(out, sweep)
        for j, (x, y) in enumerate(zip(src_sets, out_sets)):
            x_count = int(x.sum())
            if x_count == 0:
                skipped += 1
                continue
            precision = float((x & y).sum()) / x_count
            per_threshold[j].append(precision)
            total += precision
            included += 1
    if included == 0:
        raise ValueError("no measurable edges in any (image, threshold) pair")
    curve = [
        (mu, float(np.mean(vals)) if vals else None)
        for mu, vals in zip(sweep.highs, per_threshold)
    ]
    return MetricReport(
        apce=total / included,
        per_threshold_precision=curve,
        skipped_pairs=skipped,
        n_images=len(sources),
        n_thresholds=len(sweep.highs),
    )


def write_apce_report(report: MetricReport, out_dir):
    """Emit apce.csv (threshold, mean precision) and report.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "apce.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "mean_precision"])
        for mu, precision in report.per_threshold_precision:
            writer.writerow([mu, "" if precision is None else repr(precision)])
    (out_dir / "report.json").write_text(
        json.dumps(
            {
                "apce": report.apce,
                "skipped_pairs": report.skipped_pairs,
                "n_i": report.n_images,
                "n_j": report.n_thresholds,
            },
            indent=2,
        )
        + "\n"
    )


def confusion_matrix(pred, gt, n_classes, ignore_label=None):
    """Row = ground-truth class, column = predicted class; pixels labeled
    ignore_label in either grid are excluded."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    keep = np.ones(gt.shape, dtype=bool)
    if ignore_label is not None:
        keep = (gt != ignore_label) & (pred != ignore_label)
    p = pred[keep]
    g = gt[keep]
    for name, arr in (("pred", p), ("gt", g)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} labels outside [0, {n_classes})")
    counts = np.bincount(
        (g.astype(np.int64) * n_classes + p.astype(np.int64)).ravel(),
        minlength=n_classes * n_classes,
    )
    return counts.reshape(n_classes, n_classes)


def miou(pred, gt, n_classes, ignore_label=None):
    """Per-class IoU and its mean over classes present in the ground truth.

    ignore_label pixels are excluded entirely. Returns (iou array with NaN
    for classes absent from gt, mean IoU).
    """
    cm = confusion_matrix(pred, gt, n_classes, ignore_label)
    inter = np.diag(cm).astype(np.float64)
    union = cm.sum(axis=0) + cm.sum(axis=1) - np.diag(cm)
    present = cm.sum(axis=1) > 0  # class appears in gt
    iou = np.full(n_classes, np.nan)
    np.divide(inter, union, out=iou, where=present & (union > 0))
    return iou, float(np.nanmean(iou[present]))
