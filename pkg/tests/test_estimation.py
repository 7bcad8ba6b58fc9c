import math

import numpy as np
import pytest

from gpsel import (CorrelationParams, IllConditionedError,
                   ParameterDomainError, PsiObjective, RankDeficiencyError,
                   RegressionBasis, SampleTooSmallError, aicc,
                   build_correlation_matrix, gls_fit, log_likelihood,
                   psi_objective)
from gpsel.estimation import PENALTY_FACTOR, chol_factor_jittered
from gpsel.regression import basis_matrix

import oracles


class TestGlsFit:
    def test_identity_correlation_reduces_to_ols(self):
        rng = np.random.default_rng(0)
        y = rng.random(9)
        fit = gls_fit(np.eye(9), np.ones((9, 1)), y)
        assert fit.beta_hat[0] == pytest.approx(y.mean(), rel=1e-12)
        assert fit.sigma2_hat == pytest.approx(np.var(y), rel=1e-12)

    def test_exact_linear_data(self):
        rng = np.random.default_rng(1)
        f = np.column_stack([np.ones(6), rng.random(6)])
        beta = np.array([2.0, -3.0])
        r_plus = oracles.random_spd(rng, 6)
        fit = gls_fit(r_plus, f, f @ beta)
        assert np.allclose(fit.beta_hat, beta, rtol=1e-9)
        assert fit.sigma2_hat == pytest.approx(0.0, abs=1e-18)

    def test_three_point_system_matches_dense_oracle(self):
        r_plus = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]])
        f = np.array([[1.0, 0.1], [1.0, 0.6], [1.0, 0.9]])
        y = np.array([0.2, -0.4, 1.3])
        fit = gls_fit(r_plus, f, y)
        beta_o, sigma2_o = oracles.gls(r_plus, f, y)
        assert np.allclose(fit.beta_hat, beta_o, rtol=1e-12)
        assert fit.sigma2_hat == pytest.approx(sigma2_o, rel=1e-12)

    def test_random_systems_match_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n = int(rng.integers(3, 9))
            k = int(rng.integers(1, min(n - 1, 4) + 1))
            r_plus = oracles.random_spd(rng, n)
            f = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))]) \
                if k > 1 else np.ones((n, 1))
            y = rng.standard_normal(n)
            fit = gls_fit(r_plus, f, y)
            beta_o, sigma2_o = oracles.gls(r_plus, f, y)
            assert np.allclose(fit.beta_hat, beta_o, rtol=1e-8)
            assert fit.sigma2_hat == pytest.approx(sigma2_o, rel=1e-8)
            assert fit.psi == pytest.approx(oracles.psi(r_plus, f, y), rel=1e-8)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = 8
            r_plus = oracles.random_spd(rng, n)
            f = np.column_stack([np.ones(n), rng.random((n, 2))])
            y = rng.standard_normal(n)
            fit = gls_fit(r_plus, f, y)
            resid = y - f @ fit.beta_hat
            grad = f.T @ np.linalg.solve(r_plus, resid)
            assert np.allclose(grad, 0.0, atol=1e-9)

    def test_rank_deficiency_names_columns(self):
        n = 6
        x = np.linspace(0, 1, n)
        f = np.column_stack([np.ones(n), x, x])  # duplicated regressor
        with pytest.raises(RankDeficiencyError) as err:
            gls_fit(np.eye(n), f, np.sin(x))
        assert err.value.columns  # at least one offending column reported

    def test_singular_correlation_rescued_by_jitter(self):
        # two identical rows make R singular at tau = 0
        f = np.ones((2, 1))
        fit = gls_fit(np.ones((2, 2)), f, np.array([1.0, 2.0]))
        assert fit.jitter > 0.0

    def test_indefinite_matrix_raises(self):
        with pytest.raises(IllConditionedError) as err:
            chol_factor_jittered(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert err.value.jitter_attempted == pytest.approx(1e-6)


class TestPsiObjective:
    def test_empty_active_set_is_domain_error(self):
        with pytest.raises(ParameterDomainError):
            psi_objective([1.0], [1.0], 0.0, np.random.rand(5, 2),
                          np.random.rand(5), active_cov=(), active_reg=(0,))

    def test_huge_theta_gives_ols_variance(self):
        rng = np.random.default_rng(3)
        x = rng.random((10, 1))
        y = rng.random(10)
        val = psi_objective([1e8], [1.0], 0.0, x, y, (0,), (0,))
        f = np.column_stack([np.ones(10), x[:, 0]])
        beta, _, _, _ = np.linalg.lstsq(f, y, rcond=None)
        resid = y - f @ beta
        assert val == pytest.approx(float(resid @ resid) / 10, rel=1e-6)

    def test_grid_matches_dense_oracle(self):
        # one input, five points, psi over a 100-value theta grid
        rng = np.random.default_rng(8)
        x = np.sort(rng.random(5))[:, None]
        y = np.sin(3 * x[:, 0]) + 0.2 * rng.random(5)
        f = basis_matrix(x, RegressionBasis((0,)))
        obj = PsiObjective(x, f, y)
        for theta in np.linspace(0.01, 50.0, 100):
            got = obj.value(np.array([theta]), np.array([1.2]), 0.01)
            a = oracles.corr_matrix(x, [theta], [1.2], 0.01)
            assert got == pytest.approx(oracles.psi(a, f, y), rel=1e-8)

    def test_p_cache_consistent_after_coordinate_moves(self):
        rng = np.random.default_rng(12)
        x = rng.random((8, 2))
        y = rng.random(8)
        f = basis_matrix(x, RegressionBasis((0,)))
        obj = PsiObjective(x, f, y)
        seq = [(np.array([1.0, 1.0]), np.array([1.0, 1.0]), 0.0),
               (np.array([2.0, 1.0]), np.array([1.0, 1.0]), 0.0),
               (np.array([2.0, 1.0]), np.array([1.7, 1.0]), 0.0),
               (np.array([2.0, 1.0]), np.array([1.7, 0.4]), 0.01),
               (np.array([1.0, 1.0]), np.array([1.0, 1.0]), 0.0)]
        for theta, p, tau in seq:
            got = obj.value(theta, p, tau)
            a = oracles.corr_matrix(x, theta, p, tau)
            assert got == pytest.approx(oracles.psi(a, f, y), rel=1e-10)

    def test_penalty_on_failure(self):
        x = np.array([[0.0], [0.5], [1.0]])
        y = np.array([1.0, 2.0, 3.0])
        f_bad = np.column_stack([np.ones(3), x[:, 0], x[:, 0]])
        obj = PsiObjective(x, f_bad, y)
        assert obj(np.array([1.0]), np.array([1.0]), 0.0) == PENALTY_FACTOR
        assert obj.failures == 1

    def test_penalty_scales_with_best_seen(self):
        x = np.array([[0.0], [0.4], [1.0]])
        y = np.array([1.0, 2.0, 3.5])
        f = basis_matrix(x, RegressionBasis())
        obj = PsiObjective(x, f, y)
        good = obj(np.array([1.0]), np.array([1.0]), 0.0)
        assert good == obj.best
        # invalid domain errors are not caught by the penalty wrapper
        with pytest.raises(ParameterDomainError):
            obj(np.array([1.0]), np.array([3.0]), 0.0)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(21)
        x = rng.random((9, 2))
        y = rng.random(9)
        perm = rng.permutation(9)
        f = basis_matrix(x, RegressionBasis((0, 1)))
        v1 = PsiObjective(x, f, y).value(
            np.array([1.0, 2.0]), np.array([1.0, 1.5]), 0.01)
        v2 = PsiObjective(x[perm], f[perm], y[perm]).value(
            np.array([1.0, 2.0]), np.array([1.0, 1.5]), 0.01)
        assert v1 == pytest.approx(v2, rel=1e-10)

    def test_output_scaling_equivariance(self):
        rng = np.random.default_rng(30)
        x = rng.random((10, 1))
        y = np.sin(4 * x[:, 0]) + 0.3 * rng.random(10)
        f = basis_matrix(x, RegressionBasis((0,)))
        c = 7.0
        grid = np.linspace(0.05, 30.0, 25)
        vals = []
        vals_scaled = []
        obj1 = PsiObjective(x, f, y)
        obj2 = PsiObjective(x, f, c * y)
        for theta in grid:
            v1 = obj1.value(np.array([theta]), np.array([1.0]), 0.0)
            v2 = obj2.value(np.array([theta]), np.array([1.0]), 0.0)
            assert v2 == pytest.approx(c * c * v1, rel=1e-9)
            vals.append(v1)
            vals_scaled.append(v2)
        assert int(np.argmin(vals)) == int(np.argmin(vals_scaled))

    def test_scaling_of_beta_and_sigma(self):
        rng = np.random.default_rng(31)
        x = rng.random((8, 1))
        y = rng.random(8)
        f = basis_matrix(x, RegressionBasis((0,)))
        a = oracles.corr_matrix(x, [2.0], [1.0], 0.01)
        fit1 = gls_fit(a, f, y)
        fit2 = gls_fit(a, f, 5.0 * y)
        assert np.allclose(fit2.beta_hat, 5.0 * fit1.beta_hat, rtol=1e-10)
        assert fit2.sigma2_hat == pytest.approx(25.0 * fit1.sigma2_hat, rel=1e-10)


class TestLogLikelihood:
    def test_direct_substitution(self):
        assert log_likelihood(1.0, 0.0, 2) == pytest.approx(
            -math.log(2 * math.pi) - 1.0)

    def test_degenerate_fit_flag(self):
        assert log_likelihood(0.0, 0.0, 4) == math.inf
        rng = np.random.default_rng(2)
        f = np.column_stack([np.ones(5), rng.random(5)])
        fit = gls_fit(np.eye(5), f, np.zeros(5))  # exactly zero residuals
        assert fit.degenerate
        assert fit.log_likelihood == math.inf

    def test_matches_multivariate_normal_density(self):
        # three-point toy set: likelihood at the profiled estimates equals
        # the joint normal density with covariance sigma2_hat * (R + tau I)
        x = np.array([[0.1], [0.5], [0.9]])
        y = np.array([1.0, 1.4, 0.7])
        f = basis_matrix(x, RegressionBasis((0,)))
        a = oracles.corr_matrix(x, [3.0], [1.5], 0.05)
        fit = gls_fit(a, f, y)
        direct = oracles.mvn_logpdf(y, f @ fit.beta_hat, fit.sigma2_hat * a)
        assert fit.log_likelihood == pytest.approx(direct, rel=1e-10)
        assert fit.log_likelihood == pytest.approx(
            oracles.log_likelihood(a, f, y), rel=1e-10)


class TestAicc:
    def test_direct_substitution(self):
        assert aicc(-5.0, n=10, m1=2, m2=3) == pytest.approx(50.0)

    def test_zero_denominator_errors(self):
        with pytest.raises(SampleTooSmallError):
            aicc(-5.0, n=7, m1=2, m2=3)

    def test_penalty_monotone_in_m1(self):
        vals = [aicc(-5.0, n=30, m1=m1, m2=3) for m1 in range(1, 10)]
        assert all(a < b for a, b in zip(vals, vals[1:]))


def test_psi_uses_correlation_assembly():
    # psi through the public covariance assembly equals the objective value
    rng = np.random.default_rng(44)
    x = rng.random((6, 2))
    y = rng.random(6)
    params = CorrelationParams([1.0, 2.0], [1.0, 2.0], 0.02)
    f = basis_matrix(x, RegressionBasis((0,)))
    a = build_correlation_matrix(x, params)
    fit = gls_fit(a, f, y)
    obj = PsiObjective(x, f, y)
    assert obj.value(params.theta, params.p, params.tau) == \
        pytest.approx(fit.psi, rel=1e-12)
