"""Regression estimators for the dissent panels.

Implements the estimators the analysis tables need: beta regression
(logit mean link, constant precision) for open-unit-interval responses,
fractional logistic quasi-MLE for shares with boundary zeros, Gaussian
random-intercept versions of both the beta and probit models integrated
by adaptive Gauss-Hermite quadrature, OLS with heteroskedasticity- and
cluster-robust errors, and the two-stage partialling-out estimator with
a coordinate-descent Lasso in the first stage and cross-fitting.

Numerical conventions: the Lasso objective is (1/(2n))||y - a - Xb||^2 +
lam*sum|b_j| with an unpenalized intercept; cluster-robust covariances
carry a G/(G-1) factor; sandwich matrices are symmetrized before use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import digamma, gammaln, log_ndtr, polygamma

from .errors import (
    ConfigError,
    ConvergenceError,
    DataValueError,
    RankError,
    UnidentifiedEffectError,
)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class Design:
    """Response, design matrix (with intercept column), optional clusters."""

    y: np.ndarray
    X: np.ndarray
    names: list[str]
    cluster_id: np.ndarray | None = None

    def validate(self) -> "Design":
        self.y = np.asarray(self.y, dtype=np.float64)
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.y.ndim != 1 or self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise DataValueError(f"bad design shapes: y {self.y.shape}, X {self.X.shape}")
        if not np.all(np.isfinite(self.y)) or not np.all(np.isfinite(self.X)):
            raise DataValueError("non-finite entries in the design")
        if len(self.names) != self.X.shape[1]:
            raise DataValueError("names do not match the design columns")
        if self.cluster_id is not None:
            self.cluster_id = np.asarray(self.cluster_id)
            if self.cluster_id.shape != self.y.shape:
                raise DataValueError("cluster ids do not align with y")
        return self


def design(y, X, names=None, cluster_id=None, add_intercept=True) -> Design:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    names = list(names)
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = ["const"] + names
    return Design(y=np.asarray(y, dtype=np.float64), X=X, names=names,
                  cluster_id=cluster_id).validate()


@dataclass
class FitResult:
    names: list[str]
    coef: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    loglik: float | None
    n: int
    fitted: np.ndarray | None = None
    y: np.ndarray | None = None
    converged: bool = True
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def z_values(self) -> np.ndarray:
        return self.coef / self.se

    def p_values(self) -> np.ndarray:
        from scipy.special import ndtr
        return 2.0 * (1.0 - ndtr(np.abs(self.z_values())))


def prune_degenerate(d: Design) -> tuple[Design, list[str]]:
    """Drop zero-variance non-intercept columns so the design can be full rank.

    Returns the pruned design and the names of the dropped columns.
    Genuinely dependent non-constant columns still raise RankError later.
    """
    d.validate()
    keep, dropped = [], []
    for j, name in enumerate(d.names):
        col = d.X[:, j]
        if name != "const" and np.all(col == col[0]):
            dropped.append(name)
        else:
            keep.append(j)
    if not dropped:
        return d, []
    pruned = Design(y=d.y, X=d.X[:, keep], names=[d.names[j] for j in keep],
                    cluster_id=d.cluster_id).validate()
    return pruned, dropped


def _check_rank(X: np.ndarray, names: list[str]) -> None:
    from scipy.linalg import qr
    _, r, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(X.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < X.shape[1]:
        bad = [names[j] for j in piv[rank:]]
        raise RankError(f"design matrix is rank deficient; dependent columns: {bad}")


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def _safe_se(cov: np.ndarray) -> np.ndarray:
    """Standard errors from a covariance diagonal; negatives become NaN."""
    diag = np.diag(cov).copy()
    out = np.full_like(diag, np.nan)
    ok = diag >= 0
    out[ok] = np.sqrt(diag[ok])
    return out


def _cluster_meat(scores: np.ndarray, cluster_id: np.ndarray) -> np.ndarray:
    """Sum of outer products of within-cluster score sums, with G/(G-1)."""
    codes, inverse = np.unique(cluster_id, return_inverse=True)
    g = codes.size
    sums = np.zeros((g, scores.shape[1]))
    np.add.at(sums, inverse, scores)
    return (sums.T @ sums) * (g / (g - 1.0))


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# --------------------------------------------------------------------------
# beta regression
# --------------------------------------------------------------------------

# keeps digamma/gammaln arguments strictly positive during wild line-search steps
_MU_EPS = 1e-12


def _beta_loglik_terms(y, ystar, log_y, log_1my, eta, phi):
    mu = np.clip(_sigmoid(eta), _MU_EPS, 1.0 - _MU_EPS)
    a = mu * phi
    b = (1.0 - mu) * phi
    ll = gammaln(phi) - gammaln(a) - gammaln(b) + (a - 1.0) * log_y + (b - 1.0) * log_1my
    return ll, mu, a, b


def _beta_score(y, ystar, log_y, log_1my, X, eta, phi):
    mu = np.clip(_sigmoid(eta), _MU_EPS, 1.0 - _MU_EPS)
    a = mu * phi
    b = (1.0 - mu) * phi
    mustar = digamma(a) - digamma(b)
    w = phi * (ystar - mustar) * mu * (1.0 - mu)
    score_beta = X.T @ w
    dphi = digamma(phi) - mu * digamma(a) - (1.0 - mu) * digamma(b) \
        + mu * log_y + (1.0 - mu) * log_1my
    return score_beta, float(dphi.sum()), w, dphi


def beta_regression(d: Design) -> FitResult:
    """MLE of the mean/precision beta model with a logit mean link.

    Starts from OLS on logit(y); the precision is estimated on the log
    scale. Cluster-robust sandwich errors are reported when the design
    carries cluster ids, otherwise inverse observed information.
    """
    d.validate()
    y, X = d.y, d.X
    if np.any(y <= 0.0) or np.any(y >= 1.0):
        bad = np.flatnonzero((y <= 0.0) | (y >= 1.0))[:10]
        raise DataValueError(f"beta regression needs y strictly in (0,1); rows {bad.tolist()}")
    _check_rank(X, d.names)
    n, p = X.shape
    ystar = np.log(y / (1.0 - y))
    log_y, log_1my = np.log(y), np.log1p(-y)

    beta0, *_ = np.linalg.lstsq(X, ystar, rcond=None)
    eta0 = X @ beta0
    mu0 = _sigmoid(eta0)
    resid = ystar - eta0
    sigma2 = float(resid @ resid) / max(n - p, 1)
    with np.errstate(divide="ignore"):
        phi0 = float(np.mean(1.0 / (sigma2 * mu0 * (1.0 - mu0)) - 1.0))
    phi0 = min(max(phi0, 0.5), 1e4)
    theta0 = np.concatenate([beta0, [math.log(phi0)]])

    def negll(theta):
        eta = X @ theta[:p]
        phi = math.exp(theta[p])
        ll, *_ = _beta_loglik_terms(y, ystar, log_y, log_1my, eta, phi)
        return -float(ll.sum())

    def grad(theta):
        eta = X @ theta[:p]
        phi = math.exp(theta[p])
        s_beta, s_phi, _, _ = _beta_score(y, ystar, log_y, log_1my, X, eta, phi)
        return -np.concatenate([s_beta, [s_phi * phi]])

    res = optimize.minimize(negll, theta0, jac=grad, method="BFGS",
                            options={"gtol": 1e-10, "maxiter": 500})
    if not res.success:
        res = optimize.minimize(negll, res.x, jac=grad, method="L-BFGS-B",
                                options={"ftol": 1e-14, "gtol": 1e-10, "maxiter": 1000})
    if not np.all(np.isfinite(res.x)) or not math.isfinite(res.fun):
        raise ConvergenceError("beta regression did not converge", detail=str(res))

    theta = res.x
    beta, phi = theta[:p], math.exp(theta[p])
    eta = X @ beta
    mu = _sigmoid(eta)

    info = _numeric_hessian(negll, theta)
    bread = np.linalg.pinv(_symmetrize(info))
    if d.cluster_id is not None:
        s_beta_w, _, w, dphi = _beta_score(y, ystar, log_y, log_1my, X, eta, phi)
        scores = np.column_stack([X * w[:, None], dphi * phi])
        meat = _cluster_meat(scores, d.cluster_id)
        cov_all = _symmetrize(bread @ meat @ bread)
    else:
        cov_all = _symmetrize(bread)
    cov = cov_all[:p, :p]
    ll, *_ = _beta_loglik_terms(y, ystar, log_y, log_1my, eta, phi)
    return FitResult(
        names=list(d.names), coef=beta, cov=cov, se=_safe_se(cov),
        loglik=float(ll.sum()), n=n, fitted=mu, y=y,
        converged=bool(res.success) or math.isfinite(res.fun),
        extra={"phi": phi, "phi_se": float(np.sqrt(max(cov_all[p, p], 0.0)) * phi)},
    )


# --------------------------------------------------------------------------
# fractional logistic quasi-MLE
# --------------------------------------------------------------------------

def fractional_logit(d: Design) -> FitResult:
    """Bernoulli quasi-MLE with a logit link for y in [0, 1].

    Handles boundary values, so it is the estimator of record for NO-vote
    shares. Robust sandwich standard errors always (clustered when ids
    are present).
    """
    d.validate()
    y, X = d.y, d.X
    if np.any(y < 0.0) or np.any(y > 1.0):
        raise DataValueError("fractional logit needs y in [0, 1]")
    _check_rank(X, d.names)
    n, p = X.shape
    beta = np.zeros(p)

    def qll(b):
        mu = _sigmoid(X @ b)
        mu = np.clip(mu, 1e-300, 1.0 - 1e-16)
        return float(y @ np.log(mu) + (1.0 - y) @ np.log1p(-mu))

    current = qll(beta)
    converged = False
    for _ in range(100):
        mu = _sigmoid(X @ beta)
        w = mu * (1.0 - mu)
        g = X.T @ (y - mu)
        h = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Hessian in fractional logit") from exc
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            val = qll(cand)
            if val >= current - 1e-12:
                break
            scale /= 2.0
        beta, previous, current = cand, current, val
        if np.max(np.abs(scale * step)) < 1e-12 or abs(current - previous) < 1e-13:
            converged = True
            break
    if not converged:
        raise ConvergenceError("fractional logit did not converge",
                               detail=f"last quasi-loglik {current}")

    mu = _sigmoid(X @ beta)
    w = mu * (1.0 - mu)
    bread = np.linalg.pinv(_symmetrize(X.T @ (X * w[:, None])))
    scores = X * (y - mu)[:, None]
    if d.cluster_id is not None:
        meat = _cluster_meat(scores, d.cluster_id)
    else:
        meat = scores.T @ scores
    cov = _symmetrize(bread @ meat @ bread)
    return FitResult(
        names=list(d.names), coef=beta, cov=cov, se=_safe_se(cov),
        loglik=qll(beta), n=n, fitted=mu, y=y, converged=True,
    )


# --------------------------------------------------------------------------
# pooled probit (also the fallback for the mixed probit)
# --------------------------------------------------------------------------

def _probit_parts(y, eta):
    log_cdf = log_ndtr(eta)
    log_sf = log_ndtr(-eta)
    log_pdf = -0.5 * eta * eta - _LOG_SQRT_2PI
    r1 = np.exp(log_pdf - log_cdf)       # pdf / cdf
    r0 = np.exp(log_pdf - log_sf)        # pdf / (1 - cdf)
    ll = y * log_cdf + (1.0 - y) * log_sf
    d1 = y * r1 - (1.0 - y) * r0
    d2 = y * (-r1 * (eta + r1)) + (1.0 - y) * (r0 * (eta - r0))
    return ll, d1, d2


def probit(d: Design) -> FitResult:
    d.validate()
    y, X = d.y, d.X
    if not set(np.unique(y)).issubset({0.0, 1.0}):
        raise DataValueError("probit needs binary y")
    _check_rank(X, d.names)
    n, p = X.shape
    beta = np.zeros(p)
    for _ in range(100):
        eta = X @ beta
        ll, d1, d2 = _probit_parts(y, eta)
        g = X.T @ d1
        h = X.T @ (X * (-d2)[:, None])
        step = np.linalg.solve(h, g)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    eta = X @ beta
    ll, d1, d2 = _probit_parts(y, eta)
    bread = np.linalg.pinv(_symmetrize(X.T @ (X * (-d2)[:, None])))
    if d.cluster_id is not None:
        meat = _cluster_meat(X * d1[:, None], d.cluster_id)
        cov = _symmetrize(bread @ meat @ bread)
    else:
        cov = _symmetrize(bread)
    from scipy.special import ndtr
    return FitResult(names=list(d.names), coef=beta, cov=cov, se=_safe_se(cov),
                     loglik=float(ll.sum()), n=n, fitted=ndtr(eta), y=y)


# --------------------------------------------------------------------------
# random-intercept models via adaptive Gauss-Hermite quadrature
# --------------------------------------------------------------------------

_MODE_ITER = 12


class _GhqProblem:
    """Marginal likelihood machinery shared by the two families."""

    def __init__(self, d: Design, family: str, q: int):
        self.family = family
        order = np.argsort(d.cluster_id.astype(str), kind="stable")
        self.order = order
        self.X = d.X[order]
        self.y = d.y[order]
        codes = d.cluster_id[order].astype(str)
        uniq, starts = np.unique(codes, return_index=True)
        starts = np.sort(starts)
        self.starts = starts
        self.n_clusters = uniq.size
        self.cluster_pos = np.searchsorted(starts, np.arange(self.y.size), side="right") - 1
        nodes, weights = np.polynomial.hermite.hermgauss(q)
        self.t = nodes
        self.logw = np.log(weights)
        if family == "beta":
            self.ystar = np.log(self.y / (1.0 - self.y))
            self.log_y = np.log(self.y)
            self.log_1my = np.log1p(-self.y)

    def _obs_ll_d1_d2(self, eta, phi):
        if self.family == "probit":
            return _probit_parts(self.y, eta)
        mu = np.clip(_sigmoid(eta), _MU_EPS, 1.0 - _MU_EPS)
        a, b = mu * phi, (1.0 - mu) * phi
        ll = gammaln(phi) - gammaln(a) - gammaln(b) \
            + (a - 1.0) * self.log_y + (b - 1.0) * self.log_1my
        mustar = digamma(a) - digamma(b)
        m = mu * (1.0 - mu)
        d1 = phi * (self.ystar - mustar) * m
        dmustar = phi * (polygamma(1, a) + polygamma(1, b))
        d2 = phi * (-(dmustar) * m * m + (self.ystar - mustar) * (1.0 - 2.0 * mu) * m)
        return ll, d1, d2

    def _obs_ll_matrix(self, eta, phi):
        """Log-density at an (n, Q) matrix of linear predictors."""
        if self.family == "probit":
            y = self.y[:, None]
            return y * log_ndtr(eta) + (1.0 - y) * log_ndtr(-eta)
        mu = np.clip(_sigmoid(eta), _MU_EPS, 1.0 - _MU_EPS)
        a, b = mu * phi, (1.0 - mu) * phi
        return (gammaln(phi) - gammaln(a) - gammaln(b)
                + (a - 1.0) * self.log_y[:, None] + (b - 1.0) * self.log_1my[:, None])

    def cluster_sum(self, values: np.ndarray) -> np.ndarray:
        return np.add.reduceat(values, self.starts, axis=0)

    def loglik(self, beta: np.ndarray, phi: float, sigma: float) -> float:
        eta0 = self.X @ beta
        u = np.zeros(self.n_clusters)
        inv_s2 = 1.0 / (sigma * sigma)
        for _ in range(_MODE_ITER):
            eta = eta0 + u[self.cluster_pos]
            _, d1, d2 = self._obs_ll_d1_d2(eta, phi)
            g = self.cluster_sum(d1) - u * inv_s2
            h = self.cluster_sum(d2) - inv_s2
            h = np.minimum(h, -1e-10)
            u = u - np.clip(g / h, -3.0, 3.0)
        eta = eta0 + u[self.cluster_pos]
        _, _, d2 = self._obs_ll_d1_d2(eta, phi)
        h = np.minimum(self.cluster_sum(d2) - inv_s2, -1e-10)
        s = 1.0 / np.sqrt(-h)
        u_nodes = u[:, None] + math.sqrt(2.0) * s[:, None] * self.t[None, :]
        eta_nodes = eta0[:, None] + u_nodes[self.cluster_pos]
        ll_obs = self._obs_ll_matrix(eta_nodes, phi)
        cluster_ll = self.cluster_sum(ll_obs)
        a = (cluster_ll - 0.5 * u_nodes * u_nodes * inv_s2
             - math.log(sigma) - _LOG_SQRT_2PI
             + self.t[None, :] ** 2 + self.logw[None, :])
        a_max = a.max(axis=1, keepdims=True)
        lse = a_max[:, 0] + np.log(np.exp(a - a_max).sum(axis=1))
        return float((0.5 * math.log(2.0) + np.log(s) + lse).sum())


def _numeric_hessian(fun, x, rel_step=1e-4):
    p = x.size
    h = rel_step * np.maximum(1.0, np.abs(x))
    out = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            ei = np.zeros(p); ei[i] = h[i]
            ej = np.zeros(p); ej[j] = h[j]
            f = (fun(x + ei + ej) - fun(x + ei - ej)
                 - fun(x - ei + ej) + fun(x - ei - ej)) / (4.0 * h[i] * h[j])
            out[i, j] = out[j, i] = f
    return out


def random_intercept(d: Design, family: str, q: int = 15) -> FitResult:
    """Per-cluster Gaussian random intercept, integrated by adaptive GHQ.

    ``family`` is "beta" (constant precision, logit link) or "probit".
    Falls back to the pooled fit, with a note, when every cluster is a
    singleton or the intercept variance collapses to zero.
    """
    d.validate()
    if d.cluster_id is None:
        raise ConfigError("random_intercept requires cluster ids")
    if q < 3:
        raise ConfigError("quadrature needs at least 3 nodes")
    if family not in ("beta", "probit"):
        raise ConfigError(f"unknown family {family!r}")
    codes = np.unique(d.cluster_id)
    if codes.size < 2:
        raise ConfigError("need at least two clusters")
    _check_rank(d.X, d.names)

    pooled = beta_regression(d) if family == "beta" else probit(d)
    if codes.size == d.y.size:
        pooled.notes.append("every cluster is a singleton; random intercept "
                            "not identified, pooled fit reported")
        pooled.extra["sigma_u"] = 0.0
        return pooled

    problem = _GhqProblem(d, family, q)
    p = d.X.shape[1]
    has_phi = family == "beta"

    def unpack(theta):
        beta = theta[:p]
        phi = math.exp(theta[p]) if has_phi else 1.0
        sigma = math.exp(theta[-1])
        return beta, phi, sigma

    def negll(theta):
        beta, phi, sigma = unpack(theta)
        return -problem.loglik(beta, phi, sigma)

    x0 = list(pooled.coef)
    if has_phi:
        x0.append(math.log(max(pooled.extra.get("phi", 10.0), 1e-3)))
    x0.append(math.log(0.5))
    x0 = np.array(x0)
    bounds = [(None, None)] * p
    if has_phi:
        bounds.append((math.log(1e-3), math.log(1e6)))
    bounds.append((math.log(1e-6), math.log(1e3)))
    res = optimize.minimize(negll, x0, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": 500, "ftol": 1e-11, "gtol": 1e-7})
    if not np.all(np.isfinite(res.x)):
        raise ConvergenceError("random-intercept fit did not converge", detail=str(res))
    beta, phi, sigma = unpack(res.x)

    if sigma < 1e-3:
        pooled.notes.append("random-intercept variance collapsed to zero; "
                            "pooled fit reported")
        pooled.extra["sigma_u"] = 0.0
        return pooled

    info = _numeric_hessian(negll, res.x)
    cov_all = _symmetrize(np.linalg.pinv(_symmetrize(info)))
    cov = cov_all[:p, :p]
    fit = FitResult(
        names=list(d.names), coef=beta, cov=cov,
        se=_safe_se(cov),
        loglik=-float(res.fun), n=d.y.size, fitted=None, y=d.y,
        converged=bool(res.success),
        extra={"sigma_u": sigma, "q": q},
    )
    if has_phi:
        fit.extra["phi"] = phi
    return fit


# --------------------------------------------------------------------------
# OLS with robust errors
# --------------------------------------------------------------------------

def ols_robust(d: Design) -> FitResult:
    """OLS with HC1 errors, cluster-robust when cluster ids are present."""
    d.validate()
    y, X = d.y, d.X
    n, p = X.shape
    if n <= p:
        raise DataValueError(f"n={n} must exceed the {p} design columns")
    _check_rank(X, d.names)
    xtx_inv = np.linalg.pinv(_symmetrize(X.T @ X))
    coef = xtx_inv @ (X.T @ y)
    fitted = X @ coef
    e = y - fitted
    scores = X * e[:, None]
    if d.cluster_id is not None:
        g = np.unique(d.cluster_id).size
        meat = _cluster_meat(scores, d.cluster_id) * ((n - 1.0) / (n - p))
        note = f"cluster-robust ({g} clusters)"
    else:
        meat = (scores.T @ scores) * (n / (n - p))
        note = "HC1"
    cov = _symmetrize(xtx_inv @ meat @ xtx_inv)
    ss_res = float(e @ e)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1.0) / (n - p) if ss_tot > 0 else 0.0
    sigma2 = ss_res / n
    loglik = -0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0) if sigma2 > 0 else None
    return FitResult(
        names=list(d.names), coef=coef, cov=cov, se=_safe_se(cov),
        loglik=loglik, n=n, fitted=fitted, y=y, notes=[note],
        extra={"r2": r2, "adj_r2": adj},
    )


# --------------------------------------------------------------------------
# pseudo R^2
# --------------------------------------------------------------------------

def pseudo_r2(fit: FitResult, null_fit: FitResult, kind: str = "mcfadden") -> float:
    """Two conventions, selected by ``kind``.

    "mcfadden" is 1 - lnL/lnL0; "corr" is the squared correlation between
    fitted and observed values.
    """
    if kind == "mcfadden":
        if fit.loglik is None or null_fit.loglik is None:
            raise DataValueError("mcfadden needs log-likelihoods in both fits")
        if null_fit.loglik == 0.0:
            raise DataValueError("null log-likelihood is zero; ratio undefined")
        return 1.0 - fit.loglik / null_fit.loglik
    if kind == "corr":
        if fit.fitted is None or fit.y is None:
            raise DataValueError("corr variant needs fitted values")
        if np.std(fit.fitted) == 0.0 or np.std(fit.y) == 0.0:
            return 0.0
        c = np.corrcoef(fit.fitted, fit.y)[0, 1]
        return float(c * c)
    raise ConfigError(f"unknown pseudo-R2 kind {kind!r}")


# --------------------------------------------------------------------------
# Lasso (coordinate descent) and the two-stage effect estimator
# --------------------------------------------------------------------------

def lasso_cd(X: np.ndarray, y: np.ndarray, lam: float, tol: float = 1e-12,
             max_iter: int = 10_000) -> tuple[np.ndarray, float]:
    """Coordinate descent for (1/(2n))||y - a - Xb||^2 + lam*sum|b|.

    The intercept ``a`` is unpenalized. Returns (b, a). Constant columns
    keep a zero coefficient.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    xm = X.mean(axis=0)
    ym = float(y.mean())
    xc = X - xm
    yc = y - ym
    col_sq = (xc * xc).sum(axis=0) / n
    beta = np.zeros(X.shape[1])
    r = yc.copy()
    for _ in range(max_iter):
        delta = 0.0
        for j in range(X.shape[1]):
            if col_sq[j] <= 0.0:
                continue
            old = beta[j]
            rho = (xc[:, j] @ r) / n + col_sq[j] * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / col_sq[j]
            if new != old:
                r += xc[:, j] * (old - new)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    a = ym - float(xm @ beta)
    return beta, a


def lasso_kkt_residual(X: np.ndarray, y: np.ndarray, beta: np.ndarray,
                       intercept: float, lam: float) -> float:
    """Max violation of the subgradient conditions at (beta, intercept)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    g = X.T @ (y - intercept - X @ beta) / n
    worst = abs(float((y - intercept - X @ beta).mean()))  # intercept condition
    for j in range(beta.size):
        if beta[j] != 0.0:
            worst = max(worst, abs(g[j] - lam * math.copysign(1.0, beta[j])))
        else:
            worst = max(worst, max(abs(g[j]) - lam, 0.0))
    return worst


@dataclass
class DmlResult:
    theta: float
    se: float
    n: int
    folds: int
    lam: float
    resid_y: np.ndarray
    resid_t: np.ndarray
    fold_of: np.ndarray


def dml_effect(Y, T, X, folds: int = 5, lam: float = 1.0, seed: int = 0,
               keys=None) -> DmlResult:
    """Cross-fitted partialling-out of confounders, then OLS on residuals.

    First stage: Lasso of Y on standardized X and of T on standardized X,
    fit out-of-fold and predicted in-fold. Second stage: no-intercept OLS
    of the Y residual on the T residual with a heteroskedasticity-robust
    standard error. When ``keys`` (stable observation identifiers) are
    supplied, the fold assignment follows the sorted key order, so row
    shuffles do not move observations between folds.
    """
    Y = np.asarray(Y, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = Y.size
    if n < folds:
        raise ConfigError(f"n={n} smaller than {folds} folds")
    if T.shape != Y.shape or X.shape[0] != n:
        raise DataValueError("Y, T, X are not aligned")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD1]))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    if keys is not None:
        keys = list(keys)
        if len(keys) != n:
            raise DataValueError("keys do not align with Y")
        rank = np.argsort(np.argsort(np.asarray(keys, dtype=object), kind="stable"))
        fold_of = perm[rank] % folds
    else:
        fold_of[perm] = np.arange(n) % folds

    resid_y = np.empty(n)
    resid_t = np.empty(n)
    for k in range(folds):
        held = fold_of == k
        rest = ~held
        mu = X[rest].mean(axis=0)
        sd = X[rest].std(axis=0, ddof=1)
        sd[sd == 0.0] = 1.0
        z_rest = (X[rest] - mu) / sd
        z_held = (X[held] - mu) / sd
        for target, resid in ((Y, resid_y), (T, resid_t)):
            beta, a = lasso_cd(z_rest, target[rest], lam)
            resid[held] = target[held] - (a + z_held @ beta)

    denom = float(resid_t @ resid_t)
    if denom <= 1e-12 * n:
        raise UnidentifiedEffectError("residualized treatment has no variance")
    theta = float(resid_t @ resid_y) / denom
    eps = resid_y - theta * resid_t
    psi = resid_t * eps
    var = float(psi @ psi) / denom**2 * (n / (n - 1.0))
    return DmlResult(theta=theta, se=math.sqrt(var), n=n, folds=folds, lam=lam,
                     resid_y=resid_y, resid_t=resid_t, fold_of=fold_of)


# --------------------------------------------------------------------------
# table formatting
# --------------------------------------------------------------------------

def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def table_rows(fits: list[tuple[str, FitResult]]) -> list[dict]:
    """Long-format rows (column, term, coef, se, z, p, stars) for CSV."""
    rows = []
    for label, fit in fits:
        pvals = fit.p_values()
        for j, name in enumerate(fit.names):
            rows.append({
                "column": label, "term": name,
                "coef": float(fit.coef[j]), "se": float(fit.se[j]),
                "z": float(fit.z_values()[j]), "p": float(pvals[j]),
                "stars": significance_stars(float(pvals[j])),
            })
        rows.append({"column": label, "term": "_loglik",
                     "coef": fit.loglik if fit.loglik is not None else "",
                     "se": "", "z": "", "p": "", "stars": ""})
        rows.append({"column": label, "term": "_n", "coef": fit.n,
                     "se": "", "z": "", "p": "", "stars": ""})
    return rows


def format_table(fits: list[tuple[str, FitResult]], title: str = "") -> str:
    """Aligned text rendering with stars at the 0.01/0.05/0.1 levels."""
    terms: list[str] = []
    for _, fit in fits:
        for name in fit.names:
            if name not in terms:
                terms.append(name)
    width = max(len(t) for t in terms) + 2
    colw = 18
    lines = []
    if title:
        lines.append(title)
    lines.append(" " * width + "".join(label.rjust(colw) for label, _ in fits))
    for term in terms:
        cells, ses = [], []
        for _, fit in fits:
            if term in fit.names:
                j = fit.names.index(term)
                p = float(fit.p_values()[j])
                cells.append(f"{fit.coef[j]:.4f}{significance_stars(p)}".rjust(colw))
                ses.append(f"({fit.se[j]:.4f})".rjust(colw))
            else:
                cells.append(" " * colw)
                ses.append(" " * colw)
        lines.append(term.ljust(width) + "".join(cells))
        lines.append(" " * width + "".join(ses))
    extras = []
    for label, fit in fits:
        ll = f"{fit.loglik:.4f}" if fit.loglik is not None else "-"
        extras.append((label, ll, fit.n))
    lines.append("loglik".ljust(width) + "".join(e[1].rjust(colw) for e in extras))
    lines.append("n".ljust(width) + "".join(str(e[2]).rjust(colw) for e in extras))
    lines.append("stars: *** p<0.01, ** p<0.05, * p<0.1")
    return "\n".join(lines) + "\n"
