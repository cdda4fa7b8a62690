import numpy as np
import pytest

from spvim import (
    ConstraintSystem,
    IllPosedError,
    CovarianceEstimate,
    DegenerateVarianceError,
    EmpiricalSubsetDistribution,
    FeatureSubset,
    estimate_covariance,
    exact_shapley,
    sample_subsets,
    solve_cwls,
    spvim_test,
    wald_intervals,
)
from spvim.crossfit import PredictivenessEstimate
from spvim.inference import TestResult as SplitTestResult


def make_estimate(subset, value, influence):
    influence = np.asarray(influence, dtype=float)
    return PredictivenessEstimate(
        subset=subset, value=float(value), influence=influence,
        fold_assignment=np.zeros(len(influence), dtype=np.intp),
        eval_index=np.arange(len(influence)),
    )


def full_setup(p, v, influences):
    dist = EmpiricalSubsetDistribution.full_enumeration(p).with_gamma(2.0)
    constraint = ConstraintSystem.for_dimension(p, v[0], v[-1])
    solution = solve_cwls(dist, v, constraint)
    estimates = [make_estimate(s, v[i], influences[i])
                 for i, s in enumerate(dist.unique_subsets)]
    return dist, constraint, solution, estimates


class TestEstimateCovariance:
    def test_zero_influence_zero_phi1(self):
        rng = np.random.default_rng(0)
        p, n = 4, 50
        v = rng.random(2**p)
        influences = [np.zeros(n)] * 2**p
        dist, constraint, solution, estimates = full_setup(p, v, influences)
        cov = estimate_covariance(dist, estimates, solution, constraint)
        assert np.allclose(cov.phi1_part, 0.0, atol=1e-15)

    def test_exact_linear_game_zero_phi2(self):
        # game values exactly linear in the encoding: residuals vanish
        p, n = 3, 40
        coef = np.array([0.3, 0.5, 0.1])
        dist = EmpiricalSubsetDistribution.full_enumeration(p).with_gamma(1.5)
        v = np.array([sum(coef[j - 1] for j in s.indices) for s in dist.unique_subsets])
        constraint = ConstraintSystem.for_dimension(p, v[0], v[-1])
        solution = solve_cwls(dist, v, constraint)
        rng = np.random.default_rng(1)
        estimates = [make_estimate(s, v[i], rng.standard_normal(n))
                     for i, s in enumerate(dist.unique_subsets)]
        cov = estimate_covariance(dist, estimates, solution, constraint)
        assert np.allclose(cov.phi2_part, 0.0, atol=1e-12)

    def test_decomposition_identity(self):
        rng = np.random.default_rng(2)
        p, n = 3, 60
        v = rng.random(2**p)
        influences = [rng.standard_normal(n) for _ in range(2**p)]
        influences = [inf - inf.mean() for inf in influences]
        dist, constraint, solution, estimates = full_setup(p, v, influences)
        cov = estimate_covariance(dist, estimates, solution, constraint)
        assert np.array_equal(cov.sigma, cov.phi1_part + cov.phi2_part / cov.gamma)
        assert np.allclose(cov.sigma, cov.sigma.T, atol=1e-10)
        assert np.all(np.diag(cov.sigma) >= -1e-12)

    def test_phi1_matches_brute_force_map(self):
        # pushing the influence matrix through the solution map by hand
        rng = np.random.default_rng(3)
        p, n = 3, 30
        v = rng.random(2**p)
        influences = [rng.standard_normal(n) for _ in range(2**p)]
        influences = [inf - inf.mean() for inf in influences]
        dist, constraint, solution, estimates = full_setup(p, v, influences)
        cov = estimate_covariance(dist, estimates, solution, constraint)

        eps = 1e-7
        vdot = np.column_stack([e.influence for e in estimates])
        rows = []
        for i in range(n):
            bumped = v + eps * vdot[i]
            c2 = ConstraintSystem.for_dimension(p, bumped[0], bumped[-1])
            rows.append((solve_cwls(dist, bumped, c2).psi - solution.psi) / eps)
        phi1 = np.cov(np.array(rows), rowvar=False, ddof=1)
        assert np.allclose(cov.phi1_part, phi1, atol=1e-5)

    def test_phi2_variance_matches_repeated_sampling(self):
        # empirical variance of the subset-sampling-only estimator across
        # seeds against the plug-in covariance at the exact law
        rng = np.random.default_rng(4)
        p = 5
        v_all = rng.random(2**p)
        table = {s.indices: v_all[i]
                 for i, s in enumerate(EmpiricalSubsetDistribution.full_enumeration(p).unique_subsets)}
        dist0, constraint, solution, estimates = full_setup(p, v_all, [np.zeros(20)] * 2**p)
        cov = estimate_covariance(dist0, estimates, solution, constraint)

        m = 4096
        seeds = 500
        psis = np.empty((seeds, p + 1))
        for r in range(seeds):
            dist = sample_subsets(p, m, seed=10_000 + r)
            v = np.array([table[s.indices] for s in dist.unique_subsets])
            c = ConstraintSystem.for_dimension(p, v[0], v[-1])
            psis[r] = solve_cwls(dist, v, c).psi
        empirical = psis.var(axis=0, ddof=1)
        predicted = np.diag(cov.phi2_part) / m
        for j in range(1, p + 1):
            assert empirical[j] == pytest.approx(predicted[j], rel=0.25), j

    def test_single_feature_phi2_zero_with_warning(self):
        dist = EmpiricalSubsetDistribution.full_enumeration(1).with_gamma(1.0)
        v = np.array([0.1, 0.6])
        constraint = ConstraintSystem.for_dimension(1, v[0], v[-1])
        solution = solve_cwls(dist, v, constraint)
        estimates = [make_estimate(s, v[i], np.array([0.1, -0.1, 0.0]))
                     for i, s in enumerate(dist.unique_subsets)]
        with pytest.warns(RuntimeWarning, match="single feature"):
            cov = estimate_covariance(dist, estimates, solution, constraint)
        assert np.allclose(cov.phi2_part, 0.0)

    def test_misaligned_influences_rejected(self):
        rng = np.random.default_rng(5)
        p = 2
        v = rng.random(4)
        dist = EmpiricalSubsetDistribution.full_enumeration(p).with_gamma(1.0)
        constraint = ConstraintSystem.for_dimension(p, v[0], v[-1])
        solution = solve_cwls(dist, v, constraint)
        estimates = [make_estimate(s, v[i], np.zeros(10 + i))
                     for i, s in enumerate(dist.unique_subsets)]
        with pytest.raises(ValueError, match="aligned"):
            estimate_covariance(dist, estimates, solution, constraint)


class TestWaldIntervals:
    def _cov(self, diag, n):
        sigma = np.diag(np.asarray(diag, dtype=float))
        return CovarianceEstimate(sigma=sigma, gamma=1.0, n=n,
                                  phi1_part=sigma, phi2_part=np.zeros_like(sigma))

    def test_frozen_arithmetic(self):
        # se = 0.05, alpha = 0.05 -> half-width 1.959964 * 0.05
        cov = self._cov([0.05**2 * 100, 0.05**2 * 100], n=100)
        lower, upper = wald_intervals(np.array([0.2, 0.2]), cov, alpha=0.05)
        assert lower[0] == pytest.approx(0.10200180077299726, abs=1e-9)
        assert upper[0] == pytest.approx(0.29799819922700273, abs=1e-9)

    def test_alpha_32_half_width(self):
        cov = self._cov([1.0], n=1)
        lower, upper = wald_intervals(np.array([0.0]), cov, alpha=0.32)
        assert (upper[0] - lower[0]) / 2 == pytest.approx(0.994457883209753, abs=1e-6)

    def test_degenerate_interval(self):
        cov = self._cov([0.0], n=50)
        lower, upper = wald_intervals(np.array([0.3]), cov, alpha=0.05)
        assert lower[0] == upper[0] == 0.3

    def test_negative_diagonal_clamped_with_warning(self):
        sigma = np.array([[-1e-12]])
        cov = CovarianceEstimate(sigma=sigma, gamma=1.0, n=10,
                                 phi1_part=sigma, phi2_part=np.zeros((1, 1)))
        with pytest.warns(RuntimeWarning, match="clamped"):
            lower, upper = wald_intervals(np.array([0.1]), cov, alpha=0.05)
        assert lower[0] == upper[0] == 0.1

    def test_interval_nesting(self):
        cov = self._cov([2.0, 0.5], n=40)
        psi = np.array([0.4, -0.1])
        lo95, hi95 = wald_intervals(psi, cov, alpha=0.05)
        lo99, hi99 = wald_intervals(psi, cov, alpha=0.01)
        assert np.all(lo99 <= lo95) and np.all(hi95 <= hi99)

    def test_alpha_validation(self):
        cov = self._cov([1.0], n=10)
        with pytest.raises(ValueError):
            wald_intervals(np.array([0.0]), cov, alpha=1.5)


class _Portion1:
    def __init__(self, psi, sigma, n):
        self.psi = np.asarray(psi, dtype=float)
        self.cov = CovarianceEstimate(
            sigma=np.asarray(sigma, dtype=float), gamma=1.0, n=n,
            phi1_part=np.asarray(sigma, dtype=float),
            phi2_part=np.zeros_like(np.asarray(sigma, dtype=float)),
        )


def null_portion(value, sigma2, n):
    rng = np.random.default_rng(0)
    infl = rng.standard_normal(n)
    infl = (infl - infl.mean())
    infl *= np.sqrt(sigma2 / max(infl.var(ddof=1), 1e-300)) if sigma2 > 0 else 0.0
    return make_estimate(FeatureSubset.empty(3), value, infl)


class TestSpvimTest:
    def test_zero_statistic(self):
        portion1 = _Portion1([0.1, 0.0, 0.0, 0.0], np.eye(4) * 0.04, n=100)
        portion2 = null_portion(0.1, 0.04, 100)
        result = spvim_test(portion1, portion2, j=1, delta=0.0, alpha=0.05,
                            null_variance=portion2.variance())
        assert result.statistic == pytest.approx(0.0, abs=1e-12)
        assert result.p_value == pytest.approx(0.5, abs=1e-12)
        assert not result.reject

    def test_frozen_tail_value(self):
        # numerator 0.1, denominator 0.04: T = 2.5, p ~ 0.0062
        sigma2_j = 0.04**2 * 200 / 2  # contributes half the denominator squared
        portion1 = _Portion1([0.0, 0.1, 0.0, 0.0],
                             np.diag([0.0, sigma2_j, 0.0, 0.0]), n=200)
        # remaining half comes from the null portion: 2 * s2 / n2 = 0.0008
        portion2 = null_portion(0.0, 0.0008 * 150 / 2, 150)
        result = spvim_test(portion1, portion2, j=1, delta=0.0, alpha=0.05,
                            null_variance=portion2.variance())
        assert result.statistic == pytest.approx(2.5, rel=1e-6)
        assert result.p_value == pytest.approx(0.006209665, rel=1e-4)
        assert result.reject

    def test_monotone_in_numerator(self):
        sigma = np.diag([0.0, 1.0, 1.0, 1.0])
        portion2 = null_portion(0.0, 0.5, 80)
        previous = 1.0
        for bump in (0.0, 0.05, 0.1, 0.2):
            portion1 = _Portion1([0.0, bump, 0.0, 0.0], sigma, n=90)
            p = spvim_test(portion1, portion2, j=1,
                           null_variance=portion2.variance()).p_value
            assert p <= previous + 1e-12
            previous = p

    def test_delta_shifts_statistic(self):
        portion1 = _Portion1([0.0, 0.3, 0.0, 0.0], np.diag([0.0, 0.9, 0.0, 0.0]), n=90)
        portion2 = null_portion(0.0, 0.5, 80)
        plain = spvim_test(portion1, portion2, j=1, delta=0.0,
                           null_variance=portion2.variance())
        shifted = spvim_test(portion1, portion2, j=1, delta=0.2,
                             null_variance=portion2.variance())
        assert shifted.statistic < plain.statistic
        assert shifted.delta == 0.2

    def test_split_sizes_recorded(self):
        portion1 = _Portion1([0.0, 0.1, 0.0, 0.0], np.eye(4), n=123)
        portion2 = null_portion(0.0, 0.3, 77)
        result = spvim_test(portion1, portion2, j=2)
        assert result.split_sizes == (123, 77)

    def test_zero_denominator(self):
        portion1 = _Portion1([0.0, 0.1, 0.0, 0.0], np.zeros((4, 4)), n=100)
        portion2 = null_portion(0.0, 0.0, 100)
        with pytest.raises(DegenerateVarianceError):
            spvim_test(portion1, portion2, j=1, null_variance=0.0)

    def test_feature_index_validation(self):
        portion1 = _Portion1([0.0, 0.1, 0.0, 0.0], np.eye(4), n=100)
        portion2 = null_portion(0.0, 0.3, 100)
        with pytest.raises(ValueError):
            spvim_test(portion1, portion2, j=0)
        with pytest.raises(ValueError):
            spvim_test(portion1, portion2, j=4)

    def test_result_invariants(self):
        with pytest.raises(ValueError):
            SplitTestResult(feature=1, statistic=1.0, p_value=0.2, delta=0.0,
                       alpha=0.05, reject=True, split_sizes=(10, 10))


class TestNullFitVariance:
    def test_first_order_dominates_when_large(self):
        est = make_estimate(FeatureSubset.empty(3), 0.5,
                            np.array([3.0, -3.0, 3.0, -3.0] * 25))
        from spvim.inference import null_fit_variance
        assert null_fit_variance(est) == pytest.approx(est.variance())

    def test_degenerate_kfold_floor(self):
        # identically-zero influence: the K-fold second-order floor applies
        influence = np.zeros(1000)
        est = PredictivenessEstimate(
            subset=FeatureSubset.empty(3), value=0.0, influence=influence,
            fold_assignment=np.arange(1000) % 5, eval_index=np.arange(1000),
        )
        from spvim.inference import null_fit_variance
        assert null_fit_variance(est) == pytest.approx(2 * 5**4 / (4**3 * 1000))

    def test_degenerate_split_floor(self):
        influence = np.zeros(300)
        est = PredictivenessEstimate(
            subset=FeatureSubset.empty(3), value=0.0, influence=influence,
            fold_assignment=np.zeros(300, dtype=np.intp), eval_index=np.arange(300),
        )
        from spvim.inference import null_fit_variance
        expected = 2 * 300 * (1 / 700 + 1 / 300) ** 2
        assert null_fit_variance(est, train_rows=700) == pytest.approx(expected)


class TestGammaLimit:
    def test_doubling_gamma_halves_sampling_part(self):
        rng = np.random.default_rng(6)
        p, n = 3, 40
        v = rng.random(2**p)
        influences = [rng.standard_normal(n) for _ in range(2**p)]
        dist, constraint, solution, estimates = full_setup(p, v, influences)
        base = estimate_covariance(dist, estimates, solution, constraint)
        doubled = estimate_covariance(dist.with_gamma(2 * dist.gamma), estimates,
                                      solution, constraint)
        assert np.allclose(doubled.sigma - doubled.phi1_part,
                           (base.sigma - base.phi1_part) / 2, atol=1e-15)
        assert np.array_equal(base.phi1_part, doubled.phi1_part)

    def test_large_gamma_sampling_part_vanishes(self):
        rng = np.random.default_rng(7)
        p, n = 3, 40
        v = rng.random(2**p)
        influences = [rng.standard_normal(n) for _ in range(2**p)]
        dist, constraint, solution, estimates = full_setup(p, v, influences)
        cov = estimate_covariance(dist.with_gamma(1e12), estimates, solution, constraint)
        assert np.allclose(cov.sigma, cov.phi1_part, atol=1e-10)


class TestSingularNullSpaceMatrix:
    def test_raises_ill_posed(self):
        # positive mass only on subsets that cannot see the direction
        # separating features 3 and 4
        p = 4
        subs = (FeatureSubset.empty(p), FeatureSubset((1,), p), FeatureSubset((2,), p),
                FeatureSubset((3,), p), FeatureSubset((4,), p), FeatureSubset.full(p))
        masses = np.array([0.3, 0.2, 0.2, 0.0, 0.0, 0.3])
        dist = EmpiricalSubsetDistribution(subs, masses, m=10).with_gamma(1.0)
        constraint = ConstraintSystem.for_dimension(p, 0.0, 1.0)
        from spvim.solver import CwlsSolution
        fake = CwlsSolution(psi=np.array([0.0, 0.25, 0.25, 0.25, 0.25]),
                            lam=np.zeros(2), kkt_condition_number=1.0)
        estimates = [make_estimate(s, 0.5, np.zeros(8)) for s in subs]
        with pytest.raises(IllPosedError):
            estimate_covariance(dist, estimates, fake, constraint)
