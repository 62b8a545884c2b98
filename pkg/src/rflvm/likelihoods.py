"""Observation models on top of the random-feature regression ψ = φ(X)β.

Supported kinds:

* ``gaussian`` — per-column conjugate normal / inverse-gamma coefficients.
* ``gaussian-marginalized`` — coefficients and noise integrated out in closed
  form; the data log likelihood is the marginal.
* ``poisson`` — log link, coefficients kept at a MAP point.
* ``bernoulli`` / ``binomial`` / ``negative-binomial`` — logit link with
  Polya-Gamma augmentation; the NB dispersion resamples through latent
  table counts.
* ``multinomial`` — per-row counts through a stick-breaking cascade of
  binomial problems (J - 1 coefficient columns).

A boolean ``mask`` flags held-out entries; masked cells contribute nothing to
any likelihood, sufficient statistic, or gradient. Linear predictors are
clipped to ``±PSI_LIMIT`` inside exponentials, and each clip is counted on
the optional ``ClampCounter``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import expit, gammaln

from . import pg
from .exceptions import ConfigError, NumericError, ShapeError
from .features import feature_map

PSI_LIMIT = 30.0
# floor on 1 - p when accumulating the dispersion rate, i.e. a cap on
# -log(1 - p) of -log(1e-300)
_RATE_TERM_CAP = -np.log(1e-300)

LOGISTIC_KINDS = ("bernoulli", "binomial", "negative-binomial")


class ClampCounter:
    """Counts how many linear-predictor entries hit the clip limit."""

    def __init__(self):
        self.events = 0

    def add(self, n):
        self.events += int(n)


def clip_psi(psi, counter=None):
    clipped = np.clip(psi, -PSI_LIMIT, PSI_LIMIT)
    if counter is not None:
        counter.add(np.count_nonzero(np.abs(psi) > PSI_LIMIT))
    return clipped


def _obs_weights(shape, mask):
    """1.0 at observed cells, 0.0 at held-out cells."""
    if mask is None:
        return np.ones(shape)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ShapeError(f"mask shape {mask.shape} does not match data {shape}")
    return (~mask).astype(float)


# ---------------------------------------------------------------------------
# priors and state


@dataclass
class CoefficientPrior:
    """Priors for one coefficient column.

    ``b0_cov`` is the fixed Gaussian covariance used by the augmented and MAP
    updates; ``s0_prec``/``a0``/``b0`` parameterize the noise-scaled conjugate
    prior of the Gaussian kinds (coefficient covariance sigma^2 * s0_prec^-1,
    noise sigma^2 ~ InvGamma(a0, b0)).
    """

    beta0: np.ndarray
    b0_cov: np.ndarray
    s0_prec: np.ndarray
    a0: float = 1.0
    b0: float = 1.0

    def __post_init__(self):
        self.beta0 = np.asarray(self.beta0, dtype=float)
        self.b0_cov = np.asarray(self.b0_cov, dtype=float)
        self.s0_prec = np.asarray(self.s0_prec, dtype=float)
        m = self.beta0.shape[0]
        if self.b0_cov.shape != (m, m) or self.s0_prec.shape != (m, m):
            raise ShapeError("prior matrices must be (M, M)")
        if self.a0 <= 0 or self.b0 <= 0:
            raise ConfigError("inverse-gamma prior parameters must be positive")
        for name, mat in (("b0_cov", self.b0_cov), ("s0_prec", self.s0_prec)):
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise ConfigError(f"{name} must be positive definite") from None

    @property
    def n_features(self):
        return self.beta0.shape[0]

    @classmethod
    def default(cls, n_features, coef_var=1.0, a0=1.0, b0=1.0):
        eye = np.eye(n_features)
        return cls(
            beta0=np.zeros(n_features),
            b0_cov=coef_var * eye,
            s0_prec=eye / coef_var,
            a0=a0,
            b0=b0,
        )

    def b0_inverse(self):
        return np.linalg.inv(self.b0_cov)


@dataclass
class LikelihoodState:
    """Per-kind likelihood parameters carried through the sampler."""

    kind: str
    beta: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    h_rate: float = 1.0


# ---------------------------------------------------------------------------
# logistic-family bookkeeping


def logistic_pieces(kind, Y, r=None, trials=None):
    """Sufficient pieces (a, b) of a logit-link likelihood exp(psi)^a / (1+exp(psi))^b.

    The augmented update uses kappa = a - b/2.
    """
    Y = np.asarray(Y, dtype=float)
    if kind == "bernoulli":
        a = Y
        b = np.ones_like(Y)
    elif kind == "binomial":
        if trials is None:
            raise ConfigError("binomial data needs a trials matrix")
        trials = np.asarray(trials, dtype=float)
        if trials.shape != Y.shape:
            raise ShapeError("trials shape does not match data")
        a = Y
        b = trials
    elif kind == "negative-binomial":
        if r is None:
            raise ConfigError("negative-binomial needs dispersion values")
        r = np.asarray(r, dtype=float)
        a = Y
        b = Y + r[None, :]
    else:
        raise ConfigError(f"not a logistic-family kind: {kind!r}")
    return a, b


def stick_breaking_pieces(Y):
    """Stick-breaking remainders and offsets for multinomial rows.

    Returns (kappa, remaining) of shape N x (J - 1): remaining[n, j] is the
    count left for columns >= j, kappa[n, j] = y[n, j] - remaining[n, j] / 2.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ShapeError("multinomial data needs at least two columns")
    totals = Y.sum(axis=1, keepdims=True)
    consumed = np.cumsum(Y, axis=1)
    remaining = np.empty((Y.shape[0], Y.shape[1] - 1))
    remaining[:, 0] = totals[:, 0]
    remaining[:, 1:] = totals - consumed[:, : Y.shape[1] - 2]
    kappa = Y[:, :-1] - remaining / 2.0
    return kappa, remaining


# ---------------------------------------------------------------------------
# gaussian kinds


def _marginal_column_stats(y, phi, prior):
    """(beta_n, a_n, b_n, cho) for a single fully observed column."""
    n = y.shape[0]
    s_n = phi.T @ phi + prior.s0_prec
    cho = cho_factor(s_n, lower=True)
    h = prior.s0_prec @ prior.beta0 + phi.T @ y
    beta_n = cho_solve(cho, h)
    a_n = prior.a0 + 0.5 * n
    b_n = prior.b0 + 0.5 * (
        y @ y + prior.beta0 @ prior.s0_prec @ prior.beta0 - beta_n @ h
    )
    if b_n <= 0:
        raise NumericError("marginal posterior scale collapsed to <= 0")
    return beta_n, a_n, b_n, cho


def _chol_logdet(mat):
    L = np.linalg.cholesky(mat)
    return 2.0 * np.log(np.diag(L)).sum()


def gaussian_log_marginal(y, phi, prior):
    """Log marginal likelihood of one column with coefficients and noise
    integrated out under the conjugate prior."""
    y = np.asarray(y, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if y.ndim != 1 or phi.shape[0] != y.shape[0]:
        raise ShapeError("y must be a vector matching the feature rows")
    n = y.shape[0]
    beta_n, a_n, b_n, cho = _marginal_column_stats(y, phi, prior)
    logdet_s0 = _chol_logdet(prior.s0_prec)
    logdet_sn = 2.0 * np.log(np.diag(cho[0])).sum()
    return (
        -0.5 * n * np.log(2.0 * np.pi)
        + 0.5 * (logdet_s0 - logdet_sn)
        + prior.a0 * np.log(prior.b0)
        - a_n * np.log(b_n)
        + gammaln(a_n)
        - gammaln(prior.a0)
    )


def _marginal_stats_shared(Y, phi, prior):
    """Marginal statistics for all columns at once (no mask: shared S_N).

    Returns (value, beta_n (M x J), a_n, b_n (J,), cho).
    """
    n, j_cols = Y.shape
    s_n = phi.T @ phi + prior.s0_prec
    cho = cho_factor(s_n, lower=True)
    hmat = (prior.s0_prec @ prior.beta0)[:, None] + phi.T @ Y
    beta_n = cho_solve(cho, hmat)
    a_n = prior.a0 + 0.5 * n
    const0 = prior.beta0 @ prior.s0_prec @ prior.beta0
    b_n = prior.b0 + 0.5 * (
        (Y**2).sum(axis=0) + const0 - (beta_n * hmat).sum(axis=0)
    )
    if np.any(b_n <= 0):
        raise NumericError("marginal posterior scale collapsed to <= 0")
    logdet_s0 = _chol_logdet(prior.s0_prec)
    logdet_sn = 2.0 * np.log(np.diag(cho[0])).sum()
    value = j_cols * (
        -0.5 * n * np.log(2.0 * np.pi)
        + 0.5 * (logdet_s0 - logdet_sn)
        + prior.a0 * np.log(prior.b0)
        + gammaln(a_n)
        - gammaln(prior.a0)
    ) - a_n * np.log(b_n).sum()
    return float(value), beta_n, a_n, b_n, cho


def gaussian_marginal_loglik(Y, phi, prior, mask=None):
    """Sum of per-column marginal log likelihoods (masked rows dropped)."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[1] == 0:
        return 0.0
    if mask is None:
        return _marginal_stats_shared(Y, phi, prior)[0]
    mask = np.asarray(mask, dtype=bool)
    total = 0.0
    for j in range(Y.shape[1]):
        obs = ~mask[:, j]
        total += gaussian_log_marginal(Y[obs, j], phi[obs], prior)
    return total


def gaussian_marginal_coefficients(Y, phi, prior, mask=None):
    """Per-column conditional posterior-mean coefficients (M x J)."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[1] == 0:
        return np.zeros((phi.shape[1], 0))
    if mask is None:
        return _marginal_stats_shared(Y, phi, prior)[1]
    mask = np.asarray(mask, dtype=bool)
    out = np.empty((phi.shape[1], Y.shape[1]))
    for j in range(Y.shape[1]):
        obs = ~mask[:, j]
        out[:, j] = _marginal_column_stats(Y[obs, j], phi[obs], prior)[0]
    return out


def sample_beta_sigma(y, phi, prior, rng):
    """Conjugate draw (beta, sigma2) for one fully observed column."""
    y = np.asarray(y, dtype=float)
    beta_n, a_n, b_n, cho = _marginal_column_stats(y, phi, prior)
    sigma2 = b_n / rng.standard_gamma(a_n)
    L = cho[0]  # lower cholesky of S_N
    z = rng.standard_normal(beta_n.shape[0])
    beta = beta_n + np.sqrt(sigma2) * solve_triangular(L, z, trans="T", lower=True)
    return beta, sigma2


def sample_beta_sigma_all(Y, phi, prior, rng, mask=None):
    """Conjugate (beta, sigma2) draws for every column.

    Unmasked data shares one factorization across columns; masked columns
    fall back to row subsets. Returns (beta (M x J), sigma2 (J,)).
    """
    Y = np.asarray(Y, dtype=float)
    m = phi.shape[1]
    j_cols = Y.shape[1]
    beta = np.empty((m, j_cols))
    sigma2 = np.empty(j_cols)
    if mask is None:
        _, beta_n, a_n, b_n, cho = _marginal_stats_shared(Y, phi, prior)
        L = cho[0]
        for j in range(j_cols):
            sigma2[j] = b_n[j] / rng.standard_gamma(a_n)
            z = rng.standard_normal(m)
            beta[:, j] = beta_n[:, j] + np.sqrt(sigma2[j]) * solve_triangular(
                L, z, trans="T", lower=True
            )
        return beta, sigma2
    mask = np.asarray(mask, dtype=bool)
    for j in range(j_cols):
        obs = ~mask[:, j]
        beta[:, j], sigma2[j] = sample_beta_sigma(Y[obs, j], phi[obs], prior, rng)
    return beta, sigma2


def gaussian_loglik(Y, psi, sigma2, mask=None):
    Y = np.asarray(Y, dtype=float)
    w = _obs_weights(Y.shape, mask)
    sigma2 = np.asarray(sigma2, dtype=float)
    resid2 = (Y - psi) ** 2
    terms = -0.5 * (np.log(2.0 * np.pi * sigma2)[None, :] + resid2 / sigma2[None, :])
    return float((w * terms).sum())


# ---------------------------------------------------------------------------
# poisson


def poisson_loglik(Y, psi, mask=None, counter=None):
    Y = np.asarray(Y, dtype=float)
    w = _obs_weights(Y.shape, mask)
    rate = np.exp(clip_psi(psi, counter))
    terms = Y * psi - rate - gammaln(Y + 1.0)
    return float((w * terms).sum())


def _poisson_dpsi(Y, psi, counter=None):
    rate = np.exp(clip_psi(psi, counter))
    inside = (np.abs(psi) <= PSI_LIMIT).astype(float)
    return Y - rate * inside


def poisson_coef_objective(Y, phi, beta, prior, mask=None, counter=None):
    """Log posterior of all Poisson coefficient columns, with its gradient."""
    Y = np.asarray(Y, dtype=float)
    w = _obs_weights(Y.shape, mask)
    psi = phi @ beta
    rate = np.exp(clip_psi(psi, counter))
    loglik = float((w * (Y * psi - rate - gammaln(Y + 1.0))).sum())
    dev = beta - prior.beta0[:, None]
    b0_inv = prior.b0_inverse()
    prior_term = -0.5 * float(np.sum(dev * (b0_inv @ dev)))
    dpsi = w * _poisson_dpsi(Y, psi)
    grad = phi.T @ dpsi - b0_inv @ dev
    return loglik + prior_term, grad


# ---------------------------------------------------------------------------
# logistic family: likelihood values


def _log_binom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def logistic_loglik(kind, Y, psi, r=None, trials=None, mask=None):
    Y = np.asarray(Y, dtype=float)
    a, b = logistic_pieces(kind, Y, r=r, trials=trials)
    w = _obs_weights(Y.shape, mask)
    if kind == "bernoulli":
        const = 0.0
    elif kind == "binomial":
        const = _log_binom(np.asarray(trials, dtype=float), Y)
    else:  # negative-binomial
        rr = np.asarray(r, dtype=float)[None, :]
        const = gammaln(Y + rr) - gammaln(rr) - gammaln(Y + 1.0)
    terms = const + a * psi - b * np.logaddexp(0.0, psi)
    return float((w * terms).sum())


def multinomial_loglik(Y, psi, mask=None):
    """Multinomial log likelihood through the stick-breaking cascade.

    ``psi`` has J - 1 columns; masked cells of the first J - 1 data columns
    are excluded.
    """
    Y = np.asarray(Y, dtype=float)
    kappa, remaining = stick_breaking_pieces(Y)
    w = _obs_weights(Y.shape, mask)[:, :-1]
    a = Y[:, :-1]
    terms = _log_binom(remaining, a) + a * psi - remaining * np.logaddexp(0.0, psi)
    # rows with no count left contribute log C(0, 0) = 0 regardless of psi
    terms = np.where(remaining > 0, terms, 0.0)
    return float((w * terms).sum())


# ---------------------------------------------------------------------------
# augmented coefficient draws


def beta_conditional_moments(phi, kappa, omega, prior):
    """Mean and covariance of a coefficient column given PG weights.

    V = (phi^T diag(omega) phi + B0^-1)^-1, m = V (B0^-1 beta0 + phi^T kappa).
    Entries with omega == 0 (masked or empty) contribute nothing.
    """
    phi = np.asarray(phi, dtype=float)
    omega = np.asarray(omega, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    b0_inv = prior.b0_inverse()
    precision = phi.T @ (omega[:, None] * phi) + b0_inv
    cho = cho_factor(precision, lower=True)
    mean = cho_solve(cho, b0_inv @ prior.beta0 + phi.T @ kappa)
    cov = cho_solve(cho, np.eye(phi.shape[1]))
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def sample_coefficients_pg(phi, b_col, kappa_col, psi_col, prior, rng, obs=None):
    """One augmented draw of a coefficient column.

    Draws omega ~ PG(b, psi) at observed cells with b > 0 (others get
    omega = 0 and are excluded), then beta from its Gaussian conditional.
    Returns (beta, omega).
    """
    n = phi.shape[0]
    b_col = np.asarray(b_col, dtype=float)
    kappa_col = np.asarray(kappa_col, dtype=float)
    active = b_col > 0
    if obs is not None:
        active = active & np.asarray(obs, dtype=bool)
    omega = np.zeros(n)
    if np.any(active):
        omega[active] = pg.sample_pg(b_col[active], psi_col[active], rng)
    kappa_eff = np.where(active, kappa_col, 0.0)
    mean, cov = beta_conditional_moments(phi, kappa_eff, omega, prior)
    L = np.linalg.cholesky(cov)
    beta = mean + L @ rng.standard_normal(mean.shape[0])
    return beta, omega


def logistic_pg_update(Y, phi, beta, prior, kind, rng, r=None, trials=None, mask=None):
    """Column-wise augmented refresh of all coefficients for a logit kind."""
    Y = np.asarray(Y, dtype=float)
    a, b = logistic_pieces(kind, Y, r=r, trials=trials)
    kappa = a - b / 2.0
    obs = None if mask is None else ~np.asarray(mask, dtype=bool)
    beta_new = np.empty_like(beta)
    omega = np.zeros_like(Y)
    for j in range(Y.shape[1]):
        psi_j = phi @ beta[:, j]
        obs_j = None if obs is None else obs[:, j]
        beta_new[:, j], omega[:, j] = sample_coefficients_pg(
            phi, b[:, j], kappa[:, j], psi_j, prior, rng, obs=obs_j
        )
    return beta_new, omega


def multinomial_pg_update(Y, phi, beta, prior, rng, mask=None):
    """Augmented refresh of the J - 1 stick-breaking coefficient columns.

    Rows whose remaining count is zero at a stage carry omega = 0 and are
    excluded from that stage's update.
    """
    Y = np.asarray(Y, dtype=float)
    kappa, remaining = stick_breaking_pieces(Y)
    obs = None if mask is None else ~np.asarray(mask, dtype=bool)
    n_stages = Y.shape[1] - 1
    if beta.shape[1] != n_stages:
        raise ShapeError("multinomial coefficients must have J - 1 columns")
    beta_new = np.empty_like(beta)
    omega = np.zeros((Y.shape[0], n_stages))
    for j in range(n_stages):
        psi_j = phi @ beta[:, j]
        obs_j = None if obs is None else obs[:, j]
        beta_new[:, j], omega[:, j] = sample_coefficients_pg(
            phi, remaining[:, j], kappa[:, j], psi_j, prior, rng, obs=obs_j
        )
    return beta_new, omega


# ---------------------------------------------------------------------------
# negative-binomial dispersion


def crt_counts(y, r, rng):
    """Latent table counts: ell_n = sum_{t=1..y_n} Bernoulli(r / (r + t - 1))."""
    y = np.asarray(y)
    if np.any(y < 0) or not np.allclose(y, np.round(y)):
        raise ShapeError("table counts need nonnegative integer data")
    if r <= 0:
        raise ConfigError("dispersion must be positive")
    y = y.astype(int)
    if y.size == 0 or y.max() == 0:
        return np.zeros(y.shape, dtype=int)
    t = np.arange(1, y.max() + 1)
    probs = r / (r + t - 1.0)
    u = rng.random((y.size, t.size))
    hits = (u < probs[None, :]) & (t[None, :] <= y.reshape(-1, 1))
    return hits.sum(axis=1).reshape(y.shape)


def sample_dispersion(y, psi, r, rng, shape0=1.0, rate0=1.0, obs=None):
    """Gamma-conjugate dispersion draw for one column via latent table counts.

    The rate accumulates -log(1 - p) = log(1 + exp(psi)) per observed cell,
    capped so p == 1 cannot produce an infinite rate, plus the prior rate.
    """
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if obs is not None:
        keep = np.asarray(obs, dtype=bool)
        y, psi = y[keep], psi[keep]
    tables = crt_counts(y, r, rng).sum()
    rate_terms = np.minimum(np.logaddexp(0.0, psi), _RATE_TERM_CAP)
    rate = rate0 + rate_terms.sum()
    r_new = rng.gamma(shape0 + tables, 1.0 / rate)
    if not np.isfinite(r_new) or r_new <= 0:
        raise NumericError("dispersion draw failed")
    return float(r_new)


def sample_dispersion_rate(r_all, shape0, hyper_shape, hyper_rate, rng):
    """Conjugate refresh of the shared prior rate on the dispersions."""
    r_all = np.asarray(r_all, dtype=float)
    return float(
        rng.gamma(hyper_shape + r_all.size * shape0, 1.0 / (hyper_rate + r_all.sum()))
    )


# ---------------------------------------------------------------------------
# total likelihood and latent-space objective


def model_log_likelihood(
    Y, X, W, lik, prior, mask=None, trials=None, counter=None
):
    """Data log likelihood of the full model at (X, W, likelihood state)."""
    phi = feature_map(X, W)
    return loglik_from_features(Y, phi, lik, prior, mask=mask, trials=trials, counter=counter)


def loglik_from_features(Y, phi, lik, prior, mask=None, trials=None, counter=None):
    kind = lik.kind
    if kind == "gaussian-marginalized":
        return gaussian_marginal_loglik(Y, phi, prior, mask=mask)
    if kind not in ("gaussian", "poisson", "multinomial") and kind not in LOGISTIC_KINDS:
        raise ConfigError(f"unknown likelihood kind: {kind!r}")
    psi = phi @ lik.beta
    if kind == "gaussian":
        return gaussian_loglik(Y, psi, lik.sigma2, mask=mask)
    if kind == "poisson":
        return poisson_loglik(Y, psi, mask=mask, counter=counter)
    if kind in LOGISTIC_KINDS:
        return logistic_loglik(kind, Y, psi, r=lik.r, trials=trials, mask=mask)
    if kind == "multinomial":
        return multinomial_loglik(Y, psi, mask=mask)
    raise ConfigError(f"unknown likelihood kind: {kind!r}")


def _loglik_and_dpsi(Y, psi, lik, trials, mask, counter):
    """Likelihood value plus its derivative wrt each linear predictor."""
    kind = lik.kind
    Y = np.asarray(Y, dtype=float)
    if kind == "gaussian":
        w = _obs_weights(Y.shape, mask)
        value = gaussian_loglik(Y, psi, lik.sigma2, mask=mask)
        dpsi = w * (Y - psi) / lik.sigma2[None, :]
        return value, dpsi
    if kind == "poisson":
        w = _obs_weights(Y.shape, mask)
        value = poisson_loglik(Y, psi, mask=mask, counter=counter)
        dpsi = w * _poisson_dpsi(Y, psi)
        return value, dpsi
    if kind in LOGISTIC_KINDS:
        a, b = logistic_pieces(kind, Y, r=lik.r, trials=trials)
        w = _obs_weights(Y.shape, mask)
        value = logistic_loglik(kind, Y, psi, r=lik.r, trials=trials, mask=mask)
        dpsi = w * (a - b * expit(psi))
        return value, dpsi
    if kind == "multinomial":
        a = Y[:, :-1]
        _, remaining = stick_breaking_pieces(Y)
        w = _obs_weights(Y.shape, mask)[:, :-1]
        value = multinomial_loglik(Y, psi, mask=mask)
        dpsi = w * np.where(remaining > 0, a - remaining * expit(psi), 0.0)
        return value, dpsi
    raise ConfigError(f"unknown likelihood kind: {kind!r}")


def latent_objective_grad(
    Y, X, W, lik, prior, mask=None, trials=None, counter=None
):
    """Log posterior of X (likelihood plus standard-normal prior), with the
    exact gradient through the feature map."""
    X = np.asarray(X, dtype=float)
    phi = feature_map(X, W)
    if lik.kind == "gaussian-marginalized":
        value, dphi = _marginal_value_and_dphi(Y, phi, prior, mask)
    else:
        psi = phi @ lik.beta
        value, dpsi = _loglik_and_dpsi(Y, psi, lik, trials, mask, counter)
        dphi = dpsi @ lik.beta.T
    # phi columns interleave s*sin(u), s*cos(u): d/du is (s*cos, -s*sin)
    du = dphi[:, 0::2] * phi[:, 1::2] - dphi[:, 1::2] * phi[:, 0::2]
    grad = du @ W - X
    value -= 0.5 * float((X**2).sum())
    return value, grad


def _marginal_value_and_dphi(Y, phi, prior, mask):
    """Marginal-Gaussian objective and its gradient wrt the feature matrix."""
    Y = np.asarray(Y, dtype=float)
    if mask is None:
        j_cols = Y.shape[1]
        value, beta_n, a_n, b_n, cho = _marginal_stats_shared(Y, phi, prior)
        phi_sninv = cho_solve(cho, phi.T).T
        wcol = a_n / b_n
        dphi = (
            -j_cols * phi_sninv
            + (Y * wcol[None, :]) @ beta_n.T
            - phi @ ((beta_n * wcol[None, :]) @ beta_n.T)
        )
        return value, dphi
    # masked path: per-column row subsets
    mask = np.asarray(mask, dtype=bool)
    value = 0.0
    dphi = np.zeros_like(phi)
    for j in range(Y.shape[1]):
        obs = ~mask[:, j]
        yj = Y[obs, j]
        pj = phi[obs]
        n = yj.shape[0]
        beta_n, a_n, b_n, cho = _marginal_column_stats(yj, pj, prior)
        logdet_s0 = _chol_logdet(prior.s0_prec)
        logdet_sn = 2.0 * np.log(np.diag(cho[0])).sum()
        value += (
            -0.5 * n * np.log(2.0 * np.pi)
            + 0.5 * (logdet_s0 - logdet_sn)
            + prior.a0 * np.log(prior.b0)
            - a_n * np.log(b_n)
            + gammaln(a_n)
            - gammaln(prior.a0)
        )
        pj_sninv = cho_solve(cho, pj.T).T
        dphi[obs] += (
            -pj_sninv
            + (a_n / b_n) * (np.outer(yj, beta_n) - pj @ np.outer(beta_n, beta_n))
        )
    return float(value), dphi
