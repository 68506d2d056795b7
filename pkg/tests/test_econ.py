import numpy as np
import pytest
from scipy.special import ndtr

from fomcdissent import econ
from fomcdissent.errors import (
    ConfigError,
    DataValueError,
    RankError,
    UnidentifiedEffectError,
)


def sim_beta(n=2000, beta=(-0.5, 1.0), phi=20.0, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, n)
    mu = 1.0 / (1.0 + np.exp(-(beta[0] + beta[1] * x)))
    y = np.clip(rng.beta(mu * phi, (1 - mu) * phi), 1e-12, 1 - 1e-12)
    return econ.design(y, x, names=["x"])


def sim_mixed(family, n_clusters=25, per=8, sigma_u=0.6, beta=(-0.3, 0.8),
              phi=15.0, seed=0):
    rng = np.random.default_rng(seed)
    cid = np.repeat(np.arange(n_clusters), per)
    u = rng.normal(0, sigma_u, n_clusters)
    x = rng.normal(0, 1, cid.size)
    eta = beta[0] + beta[1] * x + u[cid]
    if family == "beta":
        mu = 1.0 / (1.0 + np.exp(-eta))
        y = np.clip(rng.beta(mu * phi, (1 - mu) * phi), 1e-9, 1 - 1e-9)
    else:
        y = (rng.random(cid.size) < ndtr(eta)).astype(float)
    return econ.design(y, x, names=["x"], cluster_id=cid)


class TestBetaRegression:
    def test_simulation_recovery(self):
        fit = econ.beta_regression(sim_beta(seed=1))
        truth = np.array([-0.5, 1.0])
        assert np.all(np.abs(fit.coef - truth) < 3 * fit.se)
        assert fit.extra["phi"] == pytest.approx(20.0, rel=0.15)

    def test_intercept_only_matches_sample_mean(self):
        d = sim_beta(seed=2)
        d0 = econ.design(d.y, np.zeros((d.y.size, 0)), names=[])
        fit = econ.beta_regression(d0)
        assert fit.fitted[0] == pytest.approx(d.y.mean(), abs=5e-3)

    def test_duplicated_covariate_is_rank_error(self):
        d = sim_beta(n=100, seed=3)
        x = d.X[:, 1]
        with pytest.raises(RankError):
            econ.beta_regression(econ.design(d.y, np.column_stack([x, x]),
                                             names=["a", "b"]))

    def test_boundary_y_rejected_with_rows(self):
        y = np.array([0.2, 0.5, 1.0, 0.7])
        with pytest.raises(DataValueError, match="rows"):
            econ.beta_regression(econ.design(y, np.ones((4, 0)), names=[]))

    def test_scale_invariance_of_loglik(self):
        d = sim_beta(n=400, seed=4)
        fit1 = econ.beta_regression(d)
        d2 = econ.design(d.y, d.X[:, 1] * 2.0, names=["x2"])
        fit2 = econ.beta_regression(d2)
        assert fit2.coef[1] == pytest.approx(fit1.coef[1] / 2.0, rel=1e-4)
        assert fit2.loglik == pytest.approx(fit1.loglik, abs=1e-5)

    def test_cluster_sandwich_is_symmetric_psd(self):
        d = sim_mixed("beta", seed=5)
        fit = econ.beta_regression(d)
        assert np.allclose(fit.cov, fit.cov.T, atol=1e-10)
        assert np.min(np.linalg.eigvalsh(fit.cov)) > -1e-10


class TestFractionalLogit:
    def test_constant_half_gives_zero_coefficients(self):
        rng = np.random.default_rng(6)
        d = econ.design(np.full(80, 0.5), rng.normal(0, 1, 80), names=["x"])
        fit = econ.fractional_logit(d)
        assert np.allclose(fit.coef, 0.0, atol=1e-8)

    def test_equals_plain_logit_on_binary_y(self):
        rng = np.random.default_rng(7)
        x = rng.normal(0, 1, 600)
        p = 1.0 / (1.0 + np.exp(-(0.3 + 0.8 * x)))
        y = (rng.random(600) < p).astype(float)
        fit = econ.fractional_logit(econ.design(y, x, names=["x"]))

        from scipy.optimize import minimize

        def nll(b):
            eta = b[0] + b[1] * x
            mu = 1.0 / (1.0 + np.exp(-eta))
            return -(y * np.log(mu) + (1 - y) * np.log1p(-mu)).sum()

        ml = minimize(nll, np.zeros(2), method="BFGS", options={"gtol": 1e-12})
        assert np.max(np.abs(fit.coef - ml.x)) < 1e-6

    def test_fractional_dgp_recovery(self):
        rng = np.random.default_rng(8)
        n = 1500
        x = rng.normal(0, 1, n)
        mu = 1.0 / (1.0 + np.exp(-(-1.0 + 0.7 * x)))
        y = np.clip(mu + rng.normal(0, 0.08, n), 0.0, 1.0)
        fit = econ.fractional_logit(econ.design(y, x, names=["x"]))
        # quasi-MLE consistency under the conditional-mean model
        assert abs(fit.coef[0] - (-1.0)) < 3 * fit.se[0] + 0.05
        assert abs(fit.coef[1] - 0.7) < 3 * fit.se[1] + 0.05


class TestRandomIntercept:
    def test_beta_family_recovery(self):
        d = sim_mixed("beta", seed=9)
        fit = econ.random_intercept(d, "beta", q=15)
        assert np.all(np.abs(fit.coef - np.array([-0.3, 0.8])) < 3 * fit.se)
        assert 0.2 < fit.extra["sigma_u"] < 1.2

    def test_probit_family_recovery(self):
        d = sim_mixed("probit", n_clusters=40, per=10, seed=10)
        fit = econ.random_intercept(d, "probit", q=15)
        assert np.all(np.abs(fit.coef - np.array([-0.3, 0.8])) < 3 * fit.se)

    def test_zero_variance_collapses_to_pooled(self):
        d = sim_mixed("probit", sigma_u=0.0, seed=11)
        fit = econ.random_intercept(d, "probit", q=15)
        assert fit.extra["sigma_u"] == 0.0
        assert any("collapsed" in n for n in fit.notes)
        pooled = econ.probit(econ.design(d.y, d.X[:, 1:], names=["x"], cluster_id=d.cluster_id))
        assert np.allclose(fit.coef, pooled.coef, atol=1e-8)

    def test_quadrature_stability(self):
        d = sim_mixed("beta", seed=12)
        f15 = econ.random_intercept(d, "beta", q=15)
        f31 = econ.random_intercept(d, "beta", q=31)
        assert abs(f15.loglik - f31.loglik) < 1e-4

    def test_singleton_clusters_fall_back(self):
        d = sim_mixed("beta", n_clusters=60, per=1, seed=13)
        fit = econ.random_intercept(d, "beta", q=15)
        assert any("singleton" in n for n in fit.notes)
        assert fit.extra["sigma_u"] == 0.0

    def test_q_too_small(self):
        d = sim_mixed("beta", seed=14)
        with pytest.raises(ConfigError):
            econ.random_intercept(d, "beta", q=2)


class TestOlsRobust:
    def test_exact_fit(self):
        rng = np.random.default_rng(15)
        x = rng.normal(0, 1, 50)
        fit = econ.ols_robust(econ.design(2.0 * x, x, names=["x"]))
        assert fit.coef[1] == pytest.approx(2.0, abs=1e-12)
        assert fit.extra["r2"] == pytest.approx(1.0, abs=1e-12)

    def test_hc1_close_to_classical_under_homoskedasticity(self):
        rng = np.random.default_rng(16)
        n = 4000
        x = rng.normal(0, 1, n)
        y = 1.0 + 0.5 * x + rng.normal(0, 1, n)
        fit = econ.ols_robust(econ.design(y, x, names=["x"]))
        X = fit.extra.get("_X") if "_X" in fit.extra else np.column_stack([np.ones(n), x])
        e = y - X @ fit.coef
        classical = np.sqrt(np.diag(float(e @ e) / (n - 2) * np.linalg.inv(X.T @ X)))
        assert np.all(np.abs(fit.se / classical - 1.0) < 0.10)

    def test_rank_error_names_columns(self):
        rng = np.random.default_rng(17)
        x = rng.normal(0, 1, 30)
        with pytest.raises(RankError, match="dup"):
            econ.ols_robust(econ.design(x, np.column_stack([x, x]), names=["x", "dup"]))

    def test_simulation_recovery(self):
        rng = np.random.default_rng(18)
        n = 300
        x = rng.normal(0, 1, (n, 2))
        y = 0.5 + x @ np.array([1.5, -0.7]) + rng.normal(0, 1, n) * (1 + 0.5 * np.abs(x[:, 0]))
        fit = econ.ols_robust(econ.design(y, x, names=["a", "b"]))
        assert np.all(np.abs(fit.coef - np.array([0.5, 1.5, -0.7])) < 3 * fit.se)


class TestPseudoR2:
    def test_null_vs_itself_is_zero(self):
        d = sim_beta(n=300, seed=19)
        null = econ.beta_regression(econ.design(d.y, np.zeros((d.y.size, 0)), names=[]))
        assert econ.pseudo_r2(null, null, "mcfadden") == pytest.approx(0.0, abs=1e-12)

    def test_perfect_fit_correlation_variant(self):
        rng = np.random.default_rng(20)
        x = rng.normal(0, 1, 100)
        fit = econ.ols_robust(econ.design(3.0 * x, x, names=["x"]))
        assert econ.pseudo_r2(fit, fit, "corr") == pytest.approx(1.0, abs=1e-10)

    def test_both_variants_match_direct_recomputation(self):
        d = sim_beta(n=500, seed=21)
        fit = econ.beta_regression(d)
        null = econ.beta_regression(econ.design(d.y, np.zeros((d.y.size, 0)), names=[]))
        mcf = econ.pseudo_r2(fit, null, "mcfadden")
        assert mcf == pytest.approx(1.0 - fit.loglik / null.loglik, abs=1e-10)
        corr = econ.pseudo_r2(fit, null, "corr")
        c = np.corrcoef(fit.fitted, fit.y)[0, 1]
        assert corr == pytest.approx(c * c, abs=1e-10)


class TestLasso:
    def test_kkt_conditions(self):
        rng = np.random.default_rng(22)
        for _ in range(10):
            n, p = 120, 8
            X = rng.normal(0, 1, (n, p))
            y = X @ rng.normal(0, 2, p) + rng.normal(0, 1, n)
            lam = float(rng.uniform(0.05, 1.5))
            beta, a = econ.lasso_cd(X, y, lam)
            assert econ.lasso_kkt_residual(X, y, beta, a, lam) < 1e-8

    def test_huge_lambda_collapses_to_mean(self):
        rng = np.random.default_rng(23)
        X = rng.normal(0, 1, (60, 4))
        y = X @ np.array([1.0, 2.0, 0.0, -1.0]) + rng.normal(0, 1, 60)
        beta, a = econ.lasso_cd(X, y, lam=1e6)
        assert np.allclose(beta, 0.0)
        assert a == pytest.approx(y.mean())


class TestDml:
    def make_confounded(self, seed, n=400, theta=0.5):
        rng = np.random.default_rng(seed)
        X = rng.normal(0, 1, (n, 10))
        signal = 5.0 * X[:, 0] - 4.0 * X[:, 3]
        T = rng.normal(0, 1, n)
        Y = theta * T + signal + rng.normal(0, 1, n)
        return Y, T, X

    def test_recovers_effect(self):
        Y, T, X = self.make_confounded(seed=24)
        res = econ.dml_effect(Y, T, X, folds=5, lam=1.0, seed=1)
        assert abs(res.theta - 0.5) < 3 * res.se

    def test_null_effect(self):
        Y, T, X = self.make_confounded(seed=25, theta=0.0)
        res = econ.dml_effect(Y, T, X, folds=5, lam=1.0, seed=2)
        assert abs(res.theta) < 3 * res.se

    def test_lambda_limit_degenerates_to_demeaned_ols(self):
        Y, T, X = self.make_confounded(seed=26, n=200)
        res = econ.dml_effect(Y, T, X, folds=4, lam=1e9, seed=3)
        # manual oracle on the same folds: out-of-fold means only
        ry = np.empty_like(Y)
        rt = np.empty_like(T)
        for k in range(4):
            held = res.fold_of == k
            ry[held] = Y[held] - Y[~held].mean()
            rt[held] = T[held] - T[~held].mean()
        theta = float(rt @ ry / (rt @ rt))
        assert res.theta == pytest.approx(theta, abs=1e-10)

    def test_unidentified_when_treatment_constant(self):
        rng = np.random.default_rng(27)
        X = rng.normal(0, 1, (50, 3))
        Y = rng.normal(0, 1, 50)
        with pytest.raises(UnidentifiedEffectError):
            econ.dml_effect(Y, np.zeros(50), X, folds=5, lam=1.0)

    def test_key_based_folds_are_order_invariant(self):
        Y, T, X = self.make_confounded(seed=28, n=120)
        keys = [f"meeting-{i:04d}" for i in range(120)]
        res1 = econ.dml_effect(Y, T, X, folds=5, lam=1.0, seed=4, keys=keys)
        perm = np.random.default_rng(0).permutation(120)
        res2 = econ.dml_effect(Y[perm], T[perm], X[perm], folds=5, lam=1.0, seed=4,
                               keys=[keys[i] for i in perm])
        assert res2.theta == pytest.approx(res1.theta, abs=1e-12)
        # unshuffling the per-observation residuals recovers the originals
        inv = np.argsort(perm)
        assert np.allclose(res2.resid_y[inv], res1.resid_y, atol=1e-12)


class TestTableFormatting:
    def test_stars_and_layout(self):
        rng = np.random.default_rng(29)
        x = rng.normal(0, 1, 200)
        y = 1.0 + 2.0 * x + rng.normal(0, 1, 200)
        fit = econ.ols_robust(econ.design(y, x, names=["x"]))
        rows = econ.table_rows([("col1", fit)])
        assert {r["term"] for r in rows} == {"const", "x", "_loglik", "_n"}
        star_row = [r for r in rows if r["term"] == "x"][0]
        assert star_row["stars"] == "***"
        text = econ.format_table([("col1", fit)], "demo")
        assert "***" in text and "p<0.01" in text
