import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from igpk.errors import DegenerateRange, EmptyInput
from igpk.metrics import (
    RolloutPrediction,
    calibration_curve,
    cumulative_nrmse_pct,
    mean_abs_calibration_error,
    nlpd,
    nrmse_pct,
    nrmse_pct_per_dim,
    summarize,
)


def _pred(means, var):
    means = np.asarray(means, float).reshape(len(means), -1)
    n_x = means.shape[1]
    return RolloutPrediction(means, np.tile(np.eye(n_x) * var, (len(means), 1, 1)))


class TestNrmse:
    def test_perfect(self, rng):
        t = rng.standard_normal((10, 2))
        assert nrmse_pct(t, t) == 0.0

    def test_hand_computed(self):
        assert nrmse_pct([0.0, 2.0], [1.0, 3.0]) == pytest.approx(50.0, abs=1e-6)

    def test_direct_formula(self, rng):
        t = rng.standard_normal((31, 2))
        p = t + 0.1 * rng.standard_normal((31, 2))
        sq = 0.0
        for k in range(31):
            sq += (t[k, 0] - p[k, 0]) ** 2 + (t[k, 1] - p[k, 1]) ** 2
        ref = 100 * np.sqrt(sq / 31) / (max(t.ravel()) - min(t.ravel()))
        assert nrmse_pct(t, p) == pytest.approx(ref, abs=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(alpha=st.floats(0.1, 10) | st.floats(-10, -0.1), beta=st.floats(-100, 100), seed=st.integers(0, 1000))
    def test_affine_invariance(self, alpha, beta, seed):
        r = np.random.default_rng(seed)
        t = r.standard_normal((20, 2))
        p = t + 0.3 * r.standard_normal((20, 2))
        assert nrmse_pct(alpha * t + beta, alpha * p + beta) == pytest.approx(nrmse_pct(t, p), abs=1e-10)

    def test_flat_truth(self):
        with pytest.raises(DegenerateRange):
            nrmse_pct(np.ones(5), np.zeros(5))

    def test_per_dim(self, rng):
        t = np.column_stack([np.linspace(0, 1, 11), np.linspace(0, 4, 11)])
        p = t + np.array([0.1, 0.2])
        np.testing.assert_allclose(nrmse_pct_per_dim(t, p), [10.0, 5.0])

    def test_cumulative(self):
        t = np.array([0.0, 1.0, 2.0, 4.0])
        p = t + 1.0
        c = cumulative_nrmse_pct(t, p)
        assert np.isnan(c[0])
        np.testing.assert_allclose(c[1:], [100.0, 50.0, 25.0])
        np.testing.assert_allclose(cumulative_nrmse_pct(t, p, full_range=True), 25.0)
        assert c[-1] == pytest.approx(nrmse_pct(t, p))


class TestNlpd:
    def test_exact_mean(self):
        assert nlpd(np.zeros(4), _pred(np.zeros(4), 1.0)) == pytest.approx(0.918939, abs=1e-6)

    def test_unit_error(self):
        assert nlpd([1.0], _pred([0.0], 1.0)) == pytest.approx(1.418939, abs=1e-6)

    def test_mvn_oracle(self, rng):
        t = rng.standard_normal((6, 2))
        m = rng.standard_normal((6, 2))
        covs = []
        for _ in range(6):
            G = rng.standard_normal((2, 2))
            covs.append(G @ G.T + 0.1 * np.eye(2))
        covs = np.array(covs)
        ref = -np.mean([stats.multivariate_normal(m[k], covs[k] + 1e-9 * np.eye(2)).logpdf(t[k]) for k in range(6)])
        assert nlpd(t, RolloutPrediction(m, covs)) == pytest.approx(ref, abs=1e-10)

    def test_zero_covariance_uses_jitter(self):
        val = nlpd(np.zeros(3), _pred(np.zeros(3), 0.0), jitter=1e-9)
        assert val == pytest.approx(0.5 * (np.log(2 * np.pi * 1e-9)), rel=1e-12)

    def test_minimized_near_true_error(self):
        err = 0.7
        sig = np.linspace(0.1, 3.0, 2901)
        vals = [nlpd([err], _pred([0.0], s**2)) for s in sig]
        assert abs(sig[int(np.argmin(vals))] - err) < 2e-3


class TestCalibration:
    def test_synthetic_well_calibrated(self):
        r = np.random.default_rng(0)
        n = 100_000
        mu = r.standard_normal((n, 1))
        sd = r.uniform(0.2, 2.0, (n, 1))
        truth = mu + sd * r.standard_normal((n, 1))
        pred = RolloutPrediction(mu, sd[:, :, None] ** 2)
        curve = dict(calibration_curve([truth], [pred], [0.5, 0.9]))
        assert abs(curve[0.5] - 0.5) <= 0.01
        assert abs(curve[0.9] - 0.9) <= 0.01

    def test_zero_variance_miss(self):
        curve = calibration_curve([np.ones(5)], [_pred(np.zeros(5), 0.0)], [0.1, 0.5, 0.9])
        assert [e for _, e in curve] == [0.0, 0.0, 0.0]

    def test_zero_variance_hit(self):
        curve = calibration_curve([np.ones(5)], [_pred(np.ones(5), 0.0)], [0.1, 0.5, 0.9])
        assert [e for _, e in curve] == [1.0, 1.0, 1.0]

    def test_monotone(self, rng):
        truths = [rng.standard_normal((20, 2)) for _ in range(5)]
        preds = [_pred(rng.standard_normal((20, 2)), rng.uniform(0.1, 3)) for _ in range(5)]
        emp = [e for _, e in calibration_curve(truths, preds, np.arange(1, 10) / 10)]
        assert np.all(np.diff(emp) >= 0)

    def test_mace(self):
        assert mean_abs_calibration_error([(0.1, 0.2), (0.5, 0.4), (0.9, 0.9)]) == pytest.approx(0.2 / 3)

    def test_level_bounds(self):
        with pytest.raises(ValueError):
            calibration_curve([np.zeros(2)], [_pred(np.zeros(2), 1.0)], [1.0])


class TestSummarize:
    def test_single(self):
        assert summarize([5.0]) == (5.0, 0.0)

    def test_pair(self):
        m, s = summarize([1.0, 3.0])
        assert m == 2.0 and s == pytest.approx(np.sqrt(2))

    def test_two_pass(self, rng):
        v = rng.standard_normal(100) * 3 + 7
        mean = sum(v) / len(v)
        var = sum((x - mean) ** 2 for x in v) / (len(v) - 1)
        m, s = summarize(v)
        assert m == pytest.approx(mean, abs=1e-12)
        assert s == pytest.approx(np.sqrt(var), abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            summarize([])
