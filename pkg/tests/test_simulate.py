import numpy as np
import pytest

from spvim import ConfigError, linear_true_importance, simulate
from spvim.simulate import (
    paper_sim_covariance,
    paper_sim_signal,
    signal_alternating,
    signal_sign,
    signal_steps,
)


class TestSignalComponents:
    def test_staircase_values(self):
        x = np.array([-5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 3.0, 5.0])
        expected = [-6.0, -6.0, -4.0, -4.0, -2.0, -2.0, 0.0, 2.0, 4.0]
        assert signal_steps(x).tolist() == expected

    def test_staircase_spot_checks(self):
        assert signal_steps(np.array([3.0]))[0] == 2.0
        assert signal_steps(np.array([5.0]))[0] == 4.0

    def test_alternating_values(self):
        x = np.array([-4.5, -3.0, -1.0, 1.0, 3.0, 4.5])
        assert signal_alternating(x).tolist() == [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]

    def test_sign(self):
        assert signal_sign(np.array([-2.0, 3.0])).tolist() == [-1.0, 1.0]


class TestLinearDgp:
    def test_shapes_and_names(self):
        ds = simulate({"kind": "linear", "p": 3, "coefficients": [1, 0, 0]}, 50, seed=0)
        assert ds.X.shape == (50, 3)
        assert ds.feature_names == ("x1", "x2", "x3")
        assert ds.task == "regression"

    def test_zero_coefficients_no_signal(self):
        ds = simulate({"kind": "linear", "p": 2, "coefficients": [0, 0]}, 50_000, seed=1)
        # the oracle predictor is the constant mean: R^2 of the best fit ~ 0
        corr = np.corrcoef(ds.X[:, 0], ds.y)[0, 1]
        assert abs(corr) ** 2 <= 0.02

    def test_coefficient_length_checked(self):
        with pytest.raises(ConfigError):
            simulate({"kind": "linear", "p": 3, "coefficients": [1, 2]}, 10, seed=0)

    def test_reproducible(self):
        a = simulate({"kind": "linear", "p": 2, "coefficients": [1, 0]}, 20, seed=5)
        b = simulate({"kind": "linear", "p": 2, "coefficients": [1, 0]}, 20, seed=5)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.y, b.y)

    def test_true_importance(self):
        truth = linear_true_importance([1.0, 0.0, 0.5], 1.0)
        total = 1.0 + 0.25 + 1.0
        assert truth == pytest.approx([0.0, 1.0 / total, 0.0, 0.25 / total])


class TestBenchmarkDgp:
    def test_minimum_p(self):
        with pytest.raises(ConfigError):
            simulate({"kind": "paper_sim", "p": 13}, 10, seed=0)

    def test_proxy_correlations(self):
        ds = simulate({"kind": "paper_sim", "p": 14}, 100_000, seed=2)
        cov = np.cov(ds.X, rowvar=False)
        assert cov[0, 10] == pytest.approx(0.7, abs=0.02)
        assert cov[2, 11] == pytest.approx(0.3, abs=0.02)
        assert cov[2, 12] == pytest.approx(0.3, abs=0.02)
        assert cov[4, 13] == pytest.approx(0.05, abs=0.02)
        assert np.allclose(np.diag(cov), 1.0, atol=0.03)

    def test_noise_features_uncorrelated(self):
        ds = simulate({"kind": "paper_sim", "p": 20}, 50_000, seed=3)
        cov = np.cov(ds.X, rowvar=False)
        assert abs(cov[5, 6]) <= 0.02
        assert abs(cov[0, 19]) <= 0.02

    def test_outcome_noise_variance(self):
        ds = simulate({"kind": "paper_sim", "p": 14}, 200_000, seed=4)
        resid = ds.y - paper_sim_signal(ds.X)
        assert resid.mean() == pytest.approx(0.0, abs=0.01)
        assert resid.var() == pytest.approx(1.0, abs=0.02)

    def test_covariance_is_positive_definite(self):
        cov = paper_sim_covariance(20)
        assert np.linalg.eigvalsh(cov).min() > 0

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            simulate({"kind": "mystery"}, 10, seed=0)
