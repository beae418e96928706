import numpy as np
import pytest

from thermal2day.metrics import (
    ThresholdSweep,
    apce,
    confusion_matrix,
    miou,
    write_apce_report,
)

from oracles import apce_set_oracle


def _toy_corpus(n=5, size=48, seed=0):
    """Blocky images with plenty of edges plus slightly perturbed outputs."""
    rng = np.random.default_rng(seed)
    sources, outputs = [], []
    for _ in range(n):
        img = np.zeros((size, size))
        for _ in range(4):
            r0, c0 = rng.integers(0, size - 10, size=2)
            h, w = rng.integers(6, 14, size=2)
            img[r0 : r0 + h, c0 : c0 + w] = rng.uniform(0.3, 1.0)
        sources.append(img)
        outputs.append(np.roll(img, 1, axis=1))  # shifted copy
    return sources, outputs


class TestSweep:
    def test_default_sweep(self):
        sweep = ThresholdSweep()
        assert len(sweep.highs) == 99
        assert sweep.highs[0] == pytest.approx(0.01)
        assert sweep.highs[-1] == pytest.approx(0.99)
        assert sweep.low_ratio == 0.5

    def test_nonincreasing_rejected(self):
        with pytest.raises(ValueError):
            ThresholdSweep(highs=(0.2, 0.1))


class TestApce:
    def test_identity_corpus_is_exactly_one(self):
        sources, _ = _toy_corpus(n=3)
        report = apce(sources, [s.copy() for s in sources])
        assert report.apce == 1.0

    def test_constant_outputs_score_zero(self):
        sources, _ = _toy_corpus(n=3)
        outputs = [np.full_like(s, 0.5) for s in sources]
        report = apce(sources, outputs)
        assert report.apce == 0.0

    def test_matches_set_intersection_oracle(self):
        sources, outputs = _toy_corpus(n=5)
        sweep = ThresholdSweep(highs=tuple(round(0.05 * j, 2) for j in range(1, 19)))
        report = apce(sources, outputs, sweep)
        expected, skipped = apce_set_oracle(sources, outputs, sweep)
        assert report.apce == pytest.approx(expected, abs=1e-12)
        assert report.skipped_pairs == skipped

    def test_invariant_under_list_reordering(self):
        sources, outputs = _toy_corpus(n=4)
        sweep = ThresholdSweep(highs=(0.1, 0.3, 0.5))
        forward = apce(sources, outputs, sweep)
        backward = apce(sources[::-1], outputs[::-1], sweep)
        assert forward.apce == pytest.approx(backward.apce, abs=1e-15)
        assert forward.skipped_pairs == backward.skipped_pairs

    def test_blank_sources_rejected(self):
        blanks = [np.full((32, 32), 0.2)] * 2
        with pytest.raises(ValueError, match="no measurable edges"):
            apce(blanks, blanks)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            apce([np.zeros((16, 16))], [np.zeros((16, 18))])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            apce([np.zeros((16, 16))], [])

    def test_report_files(self, tmp_path):
        sources, outputs = _toy_corpus(n=2)
        sweep = ThresholdSweep(highs=(0.1, 0.5, 0.9))
        report = apce(sources, outputs, sweep)
        write_apce_report(report, tmp_path)
        import csv as csv_mod
        import json

        with open(tmp_path / "apce.csv") as fh:
            rows = list(csv_mod.reader(fh))
        assert rows[0] == ["threshold", "mean_precision"]
        assert len(rows) == 4
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["apce"] == pytest.approx(report.apce)
        assert data["n_i"] == 2 and data["n_j"] == 3
        assert "skipped_pairs" in data

    def test_value_in_unit_interval(self):
        sources, outputs = _toy_corpus(n=3, seed=5)
        report = apce(sources, outputs, ThresholdSweep(highs=(0.05, 0.2, 0.6)))
        assert 0.0 <= report.apce <= 1.0
        for _, p in report.per_threshold_precision:
            assert p is None or 0.0 <= p <= 1.0


class TestMiou:
    def test_perfect_masks(self):
        rng = np.random.default_rng(0)
        gt = rng.integers(0, 4, size=(16, 16))
        iou, mean_iou = miou(gt.copy(), gt, n_classes=4)
        np.testing.assert_allclose(iou[np.isfinite(iou)], 1.0)
        assert mean_iou == 1.0

    def test_disjoint_masks(self):
        gt = np.zeros((8, 8), dtype=int)
        pred = np.ones((8, 8), dtype=int)
        iou, mean_iou = miou(pred, gt, n_classes=2)
        assert iou[0] == 0.0
        assert mean_iou == 0.0

    def test_hand_counted_confusion(self):
        # gt: top half class 0, bottom half class 1; pred flips two class-0
        # pixels to 1. Confusion [[6, 2], [0, 8]]:
        # iou0 = 6 / (8 + 6 - 6) = 0.75, iou1 = 8 / (8 + 10 - 8) = 0.8
        gt = np.zeros((4, 4), dtype=int)
        gt[2:] = 1
        pred = gt.copy()
        pred[0, 0] = 1
        pred[1, 3] = 1
        cm = confusion_matrix(pred, gt, 2)
        np.testing.assert_array_equal(cm, [[6, 2], [0, 8]])
        iou, mean_iou = miou(pred, gt, n_classes=2)
        assert iou[0] == pytest.approx(0.75)
        assert iou[1] == pytest.approx(0.8)
        assert mean_iou == pytest.approx(0.775)

    def test_ignore_label_excluded(self):
        gt = np.array([[0, 1], [255, 1]])
        pred = np.array([[0, 0], [0, 1]])
        cm = confusion_matrix(pred, gt, 2, ignore_label=255)
        assert cm.sum() == 3  # the 255 pixel is gone
        iou, _ = miou(pred, gt, n_classes=2, ignore_label=255)
        assert iou[0] == pytest.approx(0.5)  # inter 1, union 2

    def test_absent_class_excluded_from_mean(self):
        gt = np.zeros((4, 4), dtype=int)
        pred = np.zeros((4, 4), dtype=int)
        iou, mean_iou = miou(pred, gt, n_classes=3)
        assert np.isnan(iou[1]) and np.isnan(iou[2])
        assert mean_iou == 1.0

    def test_label_permutation_symmetry(self):
        rng = np.random.default_rng(3)
        gt = rng.integers(0, 3, size=(12, 12))
        pred = rng.integers(0, 3, size=(12, 12))
        _, mean_a = miou(pred, gt, n_classes=3)
        perm = np.array([2, 0, 1])
        _, mean_b = miou(perm[pred], perm[gt], n_classes=3)
        assert mean_a == pytest.approx(mean_b, abs=1e-12)

    def test_out_of_range_label_rejected(self):
        with pytest.raises(ValueError, match="labels outside"):
            miou(np.array([[5]]), np.array([[0]]), n_classes=2)
