import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orientkit.bins import (
    DEFAULT_THRESHOLDS,
    GaussianTargetParams,
    angular_error,
    circular_bin_distance,
    evaluate,
    quadrant_breakdown,
    quadrant_of,
    target_distribution,
)

TABLE6_SIGMAS = (1.0, 2.0, 3.0, 4.0, 6.0, 8.0)

bins_st = st.integers(min_value=0, max_value=71)


class TestBinDistance:
    def test_wraparound(self):
        assert circular_bin_distance(0, 71) == 1

    def test_antipodal_max(self):
        assert circular_bin_distance(10, 46) == 36

    @given(bins_st)
    def test_identity(self, k):
        assert circular_bin_distance(k, k) == 0

    @given(bins_st, bins_st)
    def test_symmetric_and_bounded(self, i, j):
        assert circular_bin_distance(i, j) == circular_bin_distance(j, i) <= 36

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            circular_bin_distance(72, 0)
        with pytest.raises(ValueError):
            circular_bin_distance(0, -1)


class TestTargetDistribution:
    def test_peak_value_closed_form(self):
        for sigma in TABLE6_SIGMAS:
            values = target_distribution(17, GaussianTargetParams(sigma=sigma))
            assert values[17] == 1.0 / (math.sqrt(2 * math.pi) * sigma)

    def test_value_at_distance_four(self):
        values = target_distribution(0, GaussianTargetParams(sigma=4.0))
        peak = 1.0 / (math.sqrt(2 * math.pi) * 4.0)
        assert values[4] == pytest.approx(peak * math.exp(-0.5), rel=1e-12)
        assert values[68] == pytest.approx(peak * math.exp(-0.5), rel=1e-12)

    def test_circular_symmetry_at_zero(self):
        values = target_distribution(0, GaussianTargetParams(sigma=3.0))
        assert values[1] == values[71]

    @given(bins_st, st.sampled_from(TABLE6_SIGMAS))
    def test_symmetry_and_argmax(self, l_gt, sigma):
        values = target_distribution(l_gt, GaussianTargetParams(sigma=sigma))
        assert int(np.argmax(values)) == l_gt
        for k in range(1, 36):
            assert values[(l_gt + k) % 72] == pytest.approx(values[(l_gt - k) % 72], rel=1e-12)

    def test_near_normalized_for_spec_sigmas(self):
        for sigma in np.linspace(1.0, 8.0, 15):
            values = target_distribution(10, GaussianTargetParams(sigma=float(sigma)))
            assert 0.99 < values.sum() < 1.01

    def test_matches_scalar_oracle(self):
        # Straight-line evaluation of the closed form, bin by bin.
        sigma, l_gt = 4.0, 30
        values = target_distribution(l_gt, GaussianTargetParams(sigma=sigma))
        for i in range(72):
            d = min(abs(i - l_gt), 72 - abs(i - l_gt))
            expected = math.exp(-(d**2) / (2 * sigma**2)) / (math.sqrt(2 * math.pi) * sigma)
            assert values[i] == pytest.approx(expected, rel=1e-14)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            GaussianTargetParams(sigma=0.0)


class TestAngularError:
    def test_wraparound(self):
        assert angular_error(359, 1) == pytest.approx(2.0)

    def test_antipodal(self):
        assert angular_error(90, 270) == pytest.approx(180.0)

    @given(st.floats(min_value=0, max_value=360, exclude_max=True))
    def test_identity(self, theta):
        assert angular_error(theta, theta) == 0.0

    @given(
        st.floats(min_value=-1000, max_value=1000),
        st.floats(min_value=-1000, max_value=1000),
    )
    def test_symmetric_and_bounded(self, a, b):
        assert angular_error(a, b) == pytest.approx(angular_error(b, a))
        assert 0.0 <= angular_error(a, b) <= 180.0

    def test_triangle_inequality_random_triples(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            a, b, c = rng.uniform(0, 360, size=3)
            assert angular_error(a, c) <= angular_error(a, b) + angular_error(b, c) + 1e-9


class TestEvaluate:
    def test_perfect_predictions(self):
        report = evaluate([10, 20, 30], [10, 20, 30])
        assert report.mae_deg == 0.0
        assert all(v == 100.0 for v in report.accuracy.values())

    def test_hand_computed_four_errors(self):
        gts = [0.0, 0.0, 0.0, 0.0]
        preds = [0.0, 10.0, 20.0, 40.0]
        report = evaluate(preds, gts, thresholds=(5, 15, 30, 45))
        assert report.mae_deg == pytest.approx(17.5)
        assert report.accuracy[15.0] == pytest.approx(50.0)
        assert report.accuracy[30.0] == pytest.approx(75.0)

    def test_single_wraparound_pair(self):
        report = evaluate([359.0], [1.0])
        assert report.mae_deg == pytest.approx(2.0)
        assert report.accuracy[5.0] == 100.0

    def test_boundary_inclusive(self):
        report = evaluate([15.0], [0.0], thresholds=(15,))
        assert report.accuracy[15.0] == 100.0

    def test_length_mismatch_and_empty(self):
        with pytest.raises(ValueError):
            evaluate([1, 2], [1])
        with pytest.raises(ValueError):
            evaluate([], [])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        preds = rng.uniform(0, 360, size=50)
        gts = rng.uniform(0, 360, size=50)
        base = evaluate(preds, gts)
        perm = rng.permutation(50)
        shuffled = evaluate(preds[perm], gts[perm])
        assert shuffled.mae_deg == pytest.approx(base.mae_deg)
        assert shuffled.accuracy == base.accuracy

    def test_accuracy_monotone_and_180_complete(self):
        rng = np.random.default_rng(1)
        preds = rng.uniform(0, 360, size=200)
        gts = rng.uniform(0, 360, size=200)
        thresholds = [1, 5, 15, 22.5, 30, 45, 90, 180]
        report = evaluate(preds, gts, thresholds=thresholds)
        values = [report.accuracy[float(t)] for t in thresholds]
        assert values == sorted(values)
        assert report.accuracy[180.0] == 100.0

    def test_curve(self):
        report = evaluate([0.0, 10.0], [0.0, 0.0], with_curve=True)
        curve = dict(report.curve)
        assert curve[180.0] == 100.0
        assert curve[0.0] == 50.0
        assert len(report.curve) == 181

    def test_quadrant_subreports_partition(self):
        rng = np.random.default_rng(2)
        gts = rng.uniform(0, 360, size=300)
        preds = (gts + rng.normal(0, 10, size=300)) % 360
        report = evaluate(preds, gts, with_quadrants=True)
        assert sum(sub.n for sub in report.per_quadrant.values()) == report.n


class TestQuadrants:
    @pytest.mark.parametrize(
        "theta,expected",
        [(180.0, "Front"), (0.0, "Back"), (100.0, "Left"), (300.0, "Right"),
         (135.0, "Front"), (225.0, "Right"), (45.0, "Left"), (315.0, "Back"),
         (44.999, "Back"), (359.0, "Back")],
    )
    def test_assignment(self, theta, expected):
        assert quadrant_of(theta) == expected

    def test_breakdown_vectorized(self):
        assert quadrant_breakdown([180, 0, 100]) == ["Front", "Back", "Left"]


class TestSerialization:
    def test_text_block(self):
        report = evaluate([0.0, 10.0], [0.0, 0.0], thresholds=DEFAULT_THRESHOLDS)
        text = report.to_text()
        assert "mae_deg 5.000000" in text
        assert "acc_22.5" in text

    def test_csv_one_row_per_threshold(self):
        report = evaluate([0.0], [0.0], thresholds=(5, 15, 30))
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "threshold_deg,accuracy_pct"
        assert len(lines) == 4
