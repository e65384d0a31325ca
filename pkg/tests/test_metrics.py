import numpy as np
import pytest

from oracles import pr_enumeration
from wmhkit.errors import NoPositives, ShapeMismatch, ZeroReference
from wmhkit.lesions import label_components, match_lesions
from wmhkit.metrics import (
    abs_volume_diff_pct,
    dice_lesion,
    dice_pixel,
    metric_report,
    pr_curve_auc,
    pr_curve_tsv,
)
from wmhkit.volume import Volume3D


def _vol(data):
    return Volume3D(np.asarray(data, dtype=np.float32))


def _ones(shape):
    return Volume3D(np.ones(shape, dtype=np.float32))


class TestDicePixel:
    def test_identical_nonempty(self, rng):
        m = _vol(rng.random((6, 6, 6)) < 0.3)
        assert dice_pixel(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4, 4), dtype=np.float32)
        b = np.zeros((4, 4, 4), dtype=np.float32)
        a[0, 0, 0] = 1.0
        b[1, 1, 1] = 1.0
        assert dice_pixel(_vol(a), _vol(b)) == 0.0

    def test_both_empty_is_one(self):
        assert dice_pixel(_vol(np.zeros((3, 3, 3))), _vol(np.zeros((3, 3, 3)))) == 1.0

    def test_hand_counts(self):
        a = np.zeros((16, 1, 1), dtype=np.float32)
        b = np.zeros((16, 1, 1), dtype=np.float32)
        a[0:8] = 1.0
        b[2:10] = 1.0  # overlap 6, |P|=|G|=8
        assert dice_pixel(_vol(a), _vol(b)) == pytest.approx(0.75)

    def test_symmetric(self, rng):
        a = _vol(rng.random((5, 5, 5)) < 0.4)
        b = _vol(rng.random((5, 5, 5)) < 0.4)
        assert dice_pixel(a, b) == dice_pixel(b, a)

    def test_permutation_invariant(self, rng):
        a = (rng.random(64) < 0.4).astype(np.float32)
        b = (rng.random(64) < 0.4).astype(np.float32)
        perm = rng.permutation(64)
        d1 = dice_pixel(_vol(a.reshape(4, 4, 4)), _vol(b.reshape(4, 4, 4)))
        d2 = dice_pixel(_vol(a[perm].reshape(4, 4, 4)), _vol(b[perm].reshape(4, 4, 4)))
        assert d1 == pytest.approx(d2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            dice_pixel(_vol(np.zeros((2, 2, 2))), _vol(np.zeros((3, 3, 3))))


class TestDiceLesion:
    def _matching(self, pred_data, gt_data):
        return match_lesions(
            label_components(_vol(pred_data)), label_components(_vol(gt_data))
        )

    def test_perfect(self, rng):
        m = (rng.random((8, 8, 8)) < 0.15).astype(np.float32)
        assert dice_lesion(self._matching(m, m)) == 1.0

    def test_zero_tp(self):
        a = np.zeros((4, 4, 4), dtype=np.float32)
        b = np.zeros((4, 4, 4), dtype=np.float32)
        a[0, 0, 0] = 1.0
        b[3, 3, 3] = 1.0
        assert dice_lesion(self._matching(a, b)) == 0.0

    def test_formula(self):
        # TP=3, FP=1, FN=2 -> 6/9
        pred = np.zeros((20, 1, 1), dtype=np.float32)
        gt = np.zeros((20, 1, 1), dtype=np.float32)
        for start in (0, 4, 8):  # three matched pairs
            pred[start : start + 2] = 1.0
            gt[start : start + 2] = 1.0
        pred[12:14] = 1.0  # FP
        gt[16:17] = 1.0  # FN 1
        gt[18:19] = 1.0  # FN 2
        m = self._matching(pred, gt)
        assert (m.tp_lesions, m.fp_lesions, m.fn_lesions) == (3, 1, 2)
        assert dice_lesion(m) == pytest.approx(6.0 / 9.0)

    def test_empty_everything(self):
        m = self._matching(np.zeros((3, 3, 3)), np.zeros((3, 3, 3)))
        assert dice_lesion(m) == 1.0


class TestAbsVolumeDiff:
    def test_equal(self):
        assert abs_volume_diff_pct(5.0, 5.0) == 0.0

    def test_proportional_overestimate(self):
        assert abs_volume_diff_pct(1.137 * 8.0, 8.0) == pytest.approx(13.7, abs=1e-9)

    def test_hand_arithmetic(self):
        assert abs_volume_diff_pct(4.0, 5.0) == pytest.approx(20.0)

    def test_zero_reference(self):
        with pytest.raises(ZeroReference):
            abs_volume_diff_pct(1.0, 0.0)


class TestPRCurve:
    def test_perfect_separation(self):
        gt = np.zeros((2, 2, 2), dtype=np.float32)
        gt[0, 0, 0] = 1.0
        gt[0, 0, 1] = 1.0
        post = Volume3D(gt.copy())
        curve = pr_curve_auc(post, _vol(gt), _ones((2, 2, 2)))
        assert curve.auc == pytest.approx(1.0)

    def test_constant_posterior_auc_is_prevalence(self, rng):
        gt = (rng.random((4, 4, 4)) < 0.3).astype(np.float32)
        if gt.sum() == 0:
            gt[0, 0, 0] = 1.0
        post = Volume3D(np.full((4, 4, 4), 0.5, dtype=np.float32))
        curve = pr_curve_auc(post, _vol(gt), _ones((4, 4, 4)))
        prevalence = gt.sum() / gt.size
        assert curve.thresholds.size == 1
        assert curve.auc == pytest.approx(prevalence)

    def test_six_voxel_worked_example(self):
        post = np.array([0.9, 0.8, 0.7, 0.6, 0.4, 0.2], dtype=np.float32).reshape(6, 1, 1)
        gt = np.array([1, 1, 0, 1, 0, 0], dtype=np.float32).reshape(6, 1, 1)
        curve = pr_curve_auc(Volume3D(post), _vol(gt), _ones((6, 1, 1)))
        points, auc = pr_enumeration(post.reshape(-1).astype(np.float64), gt.reshape(-1) > 0)
        np.testing.assert_allclose(curve.precision, [p for _, p, _ in points], atol=1e-12)
        np.testing.assert_allclose(curve.recall, [r for _, _, r in points], atol=1e-12)
        assert curve.auc == pytest.approx(auc, abs=1e-12)
        assert curve.auc == pytest.approx(65.0 / 72.0, abs=1e-9)

    def test_matches_enumeration_oracle_random(self, rng):
        for _ in range(10):
            shape = (6, 6, 6)
            post = (rng.integers(0, 9, size=shape) / 8.0).astype(np.float32)
            gt = (rng.random(shape) < 0.3).astype(np.float32)
            mask = (rng.random(shape) < 0.8).astype(np.float32)
            if (gt * mask).sum() == 0:
                continue
            curve = pr_curve_auc(Volume3D(post), _vol(gt), _vol(mask))
            inside = mask > 0
            _, auc = pr_enumeration(post[inside].astype(np.float64), gt[inside] > 0)
            assert curve.auc == pytest.approx(auc, abs=1e-9)

    def test_recall_non_decreasing(self, rng):
        post = rng.random((5, 5, 5)).astype(np.float32)
        gt = (rng.random((5, 5, 5)) < 0.4).astype(np.float32)
        curve = pr_curve_auc(Volume3D(post), _vol(gt), _ones((5, 5, 5)))
        assert np.all(np.diff(curve.recall) >= 0)

    def test_auc_invariant_to_monotone_transform(self, rng):
        post = rng.random((5, 5, 5)).astype(np.float32)
        gt = (rng.random((5, 5, 5)) < 0.4).astype(np.float32)
        mask = _ones((5, 5, 5))
        a = pr_curve_auc(Volume3D(post), _vol(gt), mask).auc
        b = pr_curve_auc(Volume3D(np.sqrt(post)), _vol(gt), mask).auc
        assert a == pytest.approx(b, abs=1e-12)

    def test_no_positives(self):
        post = Volume3D(np.random.default_rng(0).random((3, 3, 3)).astype(np.float32))
        with pytest.raises(NoPositives):
            pr_curve_auc(post, _vol(np.zeros((3, 3, 3))), _ones((3, 3, 3)))

    def test_tsv_has_one_row_per_operating_point(self, rng):
        post = (rng.integers(0, 5, size=(4, 4, 4)) / 4.0).astype(np.float32)
        gt = (rng.random((4, 4, 4)) < 0.4).astype(np.float32)
        gt[0, 0, 0] = 1.0
        curve = pr_curve_auc(Volume3D(post), _vol(gt), _ones((4, 4, 4)))
        lines = pr_curve_tsv(curve).strip().splitlines()
        assert lines[0] == "threshold\tprecision\trecall"
        assert len(lines) == curve.thresholds.size + 1


class TestMetricReport:
    def test_report_fields(self, rng):
        gt = (rng.random((8, 8, 8)) < 0.2).astype(np.float32)
        pred = gt.copy()
        report = metric_report(_vol(pred), _vol(gt))
        assert report.dice_pixel == 1.0
        assert report.dice_lesion == 1.0
        assert report.avd_percent == 0.0
        assert report.auc_pr is None
        assert "auc_pr" not in report.to_dict()

    def test_report_with_posterior(self, rng):
        gt = np.zeros((6, 6, 6), dtype=np.float32)
        gt[2:4, 2:4, 2:4] = 1.0
        post = Volume3D(gt * 0.9 + 0.05)
        report = metric_report(_vol(gt), _vol(gt), post, _ones((6, 6, 6)))
        assert report.auc_pr == pytest.approx(1.0)
        assert report.to_dict()["auc_pr"] == pytest.approx(1.0)

    def test_counts_consistent(self, rng):
        pred = (rng.random((8, 8, 8)) < 0.25).astype(np.float32)
        gt = (rng.random((8, 8, 8)) < 0.25).astype(np.float32)
        if gt.sum() == 0:
            gt[0, 0, 0] = 1.0
        report = metric_report(_vol(pred), _vol(gt))
        c = report.counts
        assert c["tp_voxels"] + c["fp_voxels"] == int(pred.sum())
        assert c["tp_voxels"] + c["fn_voxels"] == int(gt.sum())
