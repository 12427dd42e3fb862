"""Depth-metric edge cases and report formatting."""

import numpy as np
import pytest

from cubefield.metrics import DepthEvalConfig, DepthMetrics, depth_metrics, metrics_report


def grid(vals):
    return np.asarray(vals, dtype=np.float64).reshape(2, -1)


class TestDepthMetrics:
    def test_double_scale_hand_values(self):
        # pred = 2, gt = 1: every error is 1 and the ratio 2 misses all
        # delta thresholds (1.25^3 = 1.953125 < 2).
        m = depth_metrics(np.full((4, 4), 2.0), np.ones((4, 4)))
        assert m.mae == pytest.approx(1.0, abs=1e-12)
        assert m.mre == pytest.approx(1.0, abs=1e-12)
        assert m.rmse == pytest.approx(1.0, abs=1e-12)
        assert (m.d1, m.d2, m.d3) == (0.0, 0.0, 0.0)
        assert m.excluded_nonpositive == 0

    def test_identical_maps_are_perfect(self):
        gt = grid([0.5, 1.0, 2.0, 4.0, 8.0, 9.5])
        m = depth_metrics(gt.copy(), gt)
        assert m.mae == 0 and m.mre == 0 and m.rmse == 0
        assert (m.d1, m.d2, m.d3) == (1.0, 1.0, 1.0)

    def test_ratio_thresholds_bracket(self):
        # ratios 1.2, 1.3, 1.6 land in the three delta buckets
        gt = grid([1.0, 1.0, 1.0, 1.0])
        pred = grid([1.2, 1.3, 1.6, 2.5])
        m = depth_metrics(pred, gt)
        assert m.d1 == pytest.approx(0.25)
        assert m.d2 == pytest.approx(0.5)
        assert m.d3 == pytest.approx(0.75)

    def test_delta_monotone_and_rmse_dominates_mae(self, rng):
        gt = rng.uniform(0.5, 9.0, size=(16, 16))
        pred = gt * rng.uniform(0.6, 1.8, size=gt.shape)
        m = depth_metrics(pred, gt)
        assert m.d1 <= m.d2 <= m.d3
        assert m.rmse >= m.mae

    def test_relative_stats_scale_invariant(self, rng):
        gt = rng.uniform(0.5, 2.0, size=(8, 8))
        pred = gt * rng.uniform(0.8, 1.3, size=gt.shape)
        cfg = DepthEvalConfig(min_depth=0.01, max_depth=100.0)
        a = depth_metrics(pred, gt, cfg)
        b = depth_metrics(3.0 * pred, 3.0 * gt, cfg)
        assert b.mre == pytest.approx(a.mre, rel=1e-12)
        assert (b.d1, b.d2, b.d3) == (a.d1, a.d2, a.d3)
        assert b.mae == pytest.approx(3.0 * a.mae, rel=1e-12)
        assert b.rmse == pytest.approx(3.0 * a.rmse, rel=1e-12)

    def test_range_mask_ignores_outside_pixels(self):
        gt = grid([1.0, 2.0, 0.1, 20.0])  # last two fall outside [0.3, 10]
        pred = grid([1.1, 2.2, 99.0, -99.0])
        m = depth_metrics(pred, gt)
        ref = depth_metrics(grid([1.1, 2.2]), grid([1.0, 2.0]))
        assert m.mae == pytest.approx(ref.mae)
        assert m.d1 == pytest.approx(ref.d1)

    def test_nonpositive_gt_counted_not_evaluated(self):
        gt = grid([1.0, 0.0, -2.0, 3.0])
        pred = grid([1.0, 5.0, 5.0, 3.0])
        m = depth_metrics(pred, gt)
        assert m.excluded_nonpositive == 2
        assert m.mae == 0.0

    def test_negative_prediction_fails_all_deltas(self):
        m = depth_metrics(grid([-1.0, 1.0]), grid([1.0, 1.0]))
        assert m.d3 == pytest.approx(0.5)
        assert np.isfinite(m.mae)

    def test_median_scaling_removes_global_scale(self):
        gt = grid([1.0, 2.0, 3.0, 4.0])
        m = depth_metrics(2.0 * gt, gt, DepthEvalConfig(median_scaling=True))
        assert m.mae == pytest.approx(0.0, abs=1e-12)
        assert m.d1 == 1.0

    def test_median_scaling_rejects_nonpositive_median(self):
        gt = grid([1.0, 2.0, 3.0, 4.0])
        pred = -np.ones_like(gt)
        with pytest.raises(ValueError, match="median"):
            depth_metrics(pred, gt, DepthEvalConfig(median_scaling=True))

    def test_permutation_invariance(self, rng):
        gt = rng.uniform(0.5, 9.0, size=64)
        pred = gt + rng.normal(0, 0.2, size=64)
        perm = rng.permutation(64)
        a = depth_metrics(pred.reshape(8, 8), gt.reshape(8, 8))
        b = depth_metrics(pred[perm].reshape(8, 8), gt[perm].reshape(8, 8))
        for va, vb in zip(a.as_row(), b.as_row()):
            assert vb == pytest.approx(va, rel=1e-12)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="range"):
            depth_metrics(np.ones((2, 2)), np.full((2, 2), 99.0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            depth_metrics(np.ones((2, 3)), np.ones((3, 2)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DepthEvalConfig(min_depth=0.0)
        with pytest.raises(ValueError):
            DepthEvalConfig(min_depth=5.0, max_depth=1.0)


class TestReport:
    def rows(self):
        a = DepthMetrics(mae=0.1, mre=0.05, rmse=0.2, d1=0.9, d2=0.95, d3=0.99)
        b = DepthMetrics(mae=0.3, mre=0.15, rmse=0.4, d1=0.7, d2=0.85, d3=0.97)
        return [("alpha", a), ("beta", b)]

    def test_csv_schema_and_mean_row(self):
        _, csv = metrics_report(self.rows())
        lines = csv.strip().splitlines()
        assert lines[0] == "scene,MAE,MRE,RMSE,d1,d2,d3"
        assert len(lines) == 4
        mean = lines[3].split(",")
        assert mean[0] == "mean"
        assert float(mean[1]) == pytest.approx(0.2, abs=1e-6)
        assert float(mean[4]) == pytest.approx(0.8, abs=1e-6)

    def test_csv_round_trips_at_six_decimals(self):
        rows = self.rows()
        _, csv = metrics_report(rows)
        parsed = [line.split(",") for line in csv.strip().splitlines()[1:3]]
        for (name, m), cells in zip(rows, parsed):
            assert cells[0] == name
            for v, cell in zip(m.as_row(), cells[1:]):
                assert float(cell) == pytest.approx(v, abs=1e-6)

    def test_text_table_aligned(self):
        text, _ = metrics_report(self.rows())
        lines = text.splitlines()
        assert lines[0].startswith("scene")
        assert "alpha" in lines[1] and "beta" in lines[2] and "mean" in lines[3]
        # all rows share the header's column layout
        assert len({len(l) for l in lines}) == 1

    def test_empty_report_rejected(self):
        with pytest.raises(ValueError):
            metrics_report([])
