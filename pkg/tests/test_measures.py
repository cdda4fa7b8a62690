import numpy as np
import pytest

from spvim import (
    DegenerateOutcomeError,
    PredictivenessMeasure,
    measure_influence,
    measure_value,
)

from _oracles import influence_by_perturbation


def random_binary_case(rng, n):
    y = np.zeros(n)
    n1 = int(rng.integers(1, n))
    y[rng.permutation(n)[:n1]] = 1.0
    f = rng.random(n)
    return f, y


class TestMeasureValue:
    def test_perfect_fit_r_squared(self):
        y = np.array([1.2, -0.3, 0.8, 2.0])
        assert measure_value("r_squared", y, y) == 1.0

    def test_r_squared_known_value(self):
        y = np.array([0.0, 1.0, 2.0, 3.0])
        f = np.array([0.5, 0.5, 2.5, 2.5])
        # mse = 0.25, population var = 1.25
        assert measure_value("r_squared", f, y) == pytest.approx(1 - 0.25 / 1.25)

    def test_r_squared_can_be_negative(self):
        y = np.array([0.0, 1.0, 0.5, 0.2])
        f = y + 10.0
        assert measure_value("r_squared", f, y) < 0.0

    def test_perfect_ranking_auc(self):
        assert measure_value("auc", [0.1, 0.9], [0.0, 1.0]) == 1.0

    def test_auc_with_ties(self):
        f = np.array([0.5, 0.5, 0.5, 0.5])
        y = np.array([0.0, 1.0, 0.0, 1.0])
        assert measure_value("auc", f, y) == 0.5

    def test_accuracy_known_value(self):
        f = np.array([0.6, 0.4, 0.7])
        y = np.array([1.0, 1.0, 0.0])
        assert measure_value("accuracy", f, y) == pytest.approx(1 / 3)

    def test_auc_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(0)
        f, y = random_binary_case(rng, 40)
        base = measure_value("auc", f, y)
        assert measure_value("auc", np.exp(3 * f), y) == pytest.approx(base, abs=1e-12)
        assert measure_value("auc", 5 * f - 2, y) == pytest.approx(base, abs=1e-12)

    def test_single_class_auc_rejected(self):
        with pytest.raises(DegenerateOutcomeError):
            measure_value("auc", [0.1, 0.9], [1.0, 1.0])

    def test_zero_variance_r_squared_rejected(self):
        with pytest.raises(DegenerateOutcomeError):
            measure_value("r_squared", [1.0, 2.0], [3.0, 3.0])

    def test_non_binary_outcomes_rejected(self):
        with pytest.raises(DegenerateOutcomeError):
            measure_value("accuracy", [0.4, 0.6], [1.0, 2.0])

    def test_unknown_measure(self):
        with pytest.raises(ValueError):
            measure_value("deviance", [0.5], [1.0])

    def test_measure_kind_validation(self):
        with pytest.raises(ValueError):
            PredictivenessMeasure("banana")
        assert PredictivenessMeasure("auc").outcome_task == "binary"
        assert PredictivenessMeasure("r_squared").outcome_task == "regression"


class TestMeasureInfluence:
    def test_constant_prediction_accuracy(self):
        f = np.full(5, 0.8)
        y = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        infl = measure_influence("accuracy", f, y)
        acc = measure_value("accuracy", f, y)
        correct = (np.ones(5) == y).astype(float)
        assert np.allclose(infl, correct - acc, atol=1e-15)

    def test_perfect_fit_r_squared_zero_influence(self):
        y = np.array([1.0, 2.0, 3.0, 0.5])
        assert np.allclose(measure_influence("r_squared", y, y), 0.0, atol=1e-15)

    def test_auc_four_point_matches_perturbation_oracle(self):
        f = np.array([0.2, 0.8, 0.4, 0.6])
        y = np.array([0.0, 1.0, 1.0, 0.0])
        infl = measure_influence("auc", f, y)
        oracle = influence_by_perturbation("auc", f, y)
        assert np.allclose(infl, oracle, atol=1e-6)

    @pytest.mark.parametrize("kind", ["r_squared", "accuracy", "auc"])
    def test_matches_perturbation_oracle_random_cases(self, kind):
        rng = np.random.default_rng(hash(kind) % 2**32)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            if kind == "r_squared":
                y = rng.standard_normal(n)
                f = y + 0.5 * rng.standard_normal(n)
            else:
                f, y = random_binary_case(rng, n)
            infl = measure_influence(kind, f, y)
            oracle = influence_by_perturbation(kind, f, y)
            assert np.allclose(infl, oracle, atol=1e-5), kind

    @pytest.mark.parametrize("kind", ["r_squared", "accuracy", "auc"])
    def test_mean_zero(self, kind):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(4, 200))
            if kind == "r_squared":
                y = rng.standard_normal(n)
                f = 0.3 * y + rng.standard_normal(n)
            else:
                f, y = random_binary_case(rng, n)
            infl = measure_influence(kind, f, y)
            assert abs(infl.mean()) <= 1e-8

    @pytest.mark.parametrize("kind", ["r_squared", "accuracy", "auc"])
    def test_first_order_reconstruction(self, kind):
        # value + mean(influence) returns the value itself
        rng = np.random.default_rng(2)
        if kind == "r_squared":
            y = rng.standard_normal(30)
            f = y + rng.standard_normal(30)
        else:
            f, y = random_binary_case(rng, 30)
        v = measure_value(kind, f, y)
        infl = measure_influence(kind, f, y)
        assert v + infl.mean() == pytest.approx(v, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            measure_influence("r_squared", [0.1, 0.2], [0.1])
