"""A fast built-in verification battery.

Each check recomputes one of the model's load-bearing facts from an
independent route (closed-form moments, numerical integration, finite
differences, exact identities) and compares. The battery is meant to catch
a miscompiled or numerically broken installation in well under two minutes;
the test suite proves the same facts more thoroughly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats
from scipy.special import expit, gammaln

from . import pg
from .data import ObservationMatrix, generate_s_curve, sample_gp_observations
from .engine import RunConfig, run
from .features import approximate_kernel, feature_map
from .latent import standardize_x
from . import likelihoods as lk
from .spectral import NiwHyper, SpectralState, niw_posterior_params, sample_concentration


@dataclass
class CheckResult:
    name: str
    module: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _result(name, module, passed, detail, started):
    return CheckResult(
        name=name,
        module=module,
        passed=bool(passed),
        detail=detail,
        seconds=time.perf_counter() - started,
    )


def check_feature_kernel(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(1)
    n_freq = 500 if fast else 2000
    X = rng.standard_normal((8, 2))
    W = rng.standard_normal((n_freq, 2))
    phi = feature_map(X, W)
    norms = np.abs(np.sum(phi**2, axis=1) - 1.0).max()
    k_hat = approximate_kernel(phi, phi)
    sq = ((X[:, None] - X[None, :]) ** 2).sum(axis=2)
    err = np.abs(k_hat - np.exp(-sq / 2.0)).max()
    tol = 0.25 if fast else 0.12
    ok = norms < 1e-10 and err < tol
    return _result(
        "feature map approximates the squared-exponential kernel",
        "features",
        ok,
        f"row-norm error {norms:.2e}, kernel error {err:.3f} (tol {tol})",
        started,
    )


def check_pg_moments(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(2)
    n = 30_000 if fast else 150_000
    worst = 0.0
    for b, c in ((1.0, 0.0), (2.0, 1.5), (3.7, -2.0), (10.0, 0.5)):
        draws = pg.sample_pg(np.full(n, b), np.full(n, c), rng)
        rel = abs(draws.mean() - pg.pg_mean(b, c)) / pg.pg_mean(b, c)
        worst = max(worst, rel)
    tol = 0.03 if fast else 0.01
    return _result(
        "augmentation draws match closed-form means",
        "pg",
        worst < tol,
        f"worst relative mean error {worst:.4f} (tol {tol})",
        started,
    )


def _log_niw_1d(mu, sig2, hyper):
    m = hyper.mu0[0]
    lam, nu, psi = hyper.lambda0, hyper.nu0, hyper.psi0[0, 0]
    log_ig = (
        (nu / 2) * np.log(psi / 2)
        - gammaln(nu / 2)
        - (nu / 2 + 1) * np.log(sig2)
        - psi / (2 * sig2)
    )
    log_norm = -0.5 * np.log(2 * np.pi * sig2 / lam) - lam * (mu - m) ** 2 / (2 * sig2)
    return log_ig + log_norm


def check_conjugate_update(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    members = rng.standard_normal((6, 1)) * 1.3 + 0.5
    hyper = NiwHyper(mu0=np.array([0.2]), lambda0=1.5, nu0=4.0, psi0=np.array([[1.1]]))
    post = niw_posterior_params(members, hyper)
    consts = []
    for mu, sig2 in [(0.0, 0.5), (1.0, 2.0), (-0.7, 1.2), (0.4, 0.3)]:
        loglik = stats.norm.logpdf(members[:, 0], mu, np.sqrt(sig2)).sum()
        consts.append(
            _log_niw_1d(mu, sig2, post) - _log_niw_1d(mu, sig2, hyper) - loglik
        )
    spread = float(np.ptp(consts))
    return _result(
        "conjugate frequency-component update satisfies Bayes' rule",
        "spectral",
        spread < 1e-8,
        f"posterior/prior/likelihood constant varies by {spread:.2e}",
        started,
    )


def check_concentration_posterior(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(4)
    n_items, k = 50, 7
    state = SpectralState(
        W=np.zeros((n_items, 1)),
        z=np.repeat(np.arange(k), [20, 10, 5, 5, 4, 3, 3]),
        means=[np.zeros(1)] * k,
        covs=[np.eye(1)] * k,
        alpha=1.0,
    )
    n_draws = 2000 if fast else 8000
    draws = np.empty(n_draws)
    for i in range(n_draws):
        draws[i] = sample_concentration(state, 1.0, 1.0, rng)

    def logw(alpha):
        return -alpha + k * np.log(alpha) + gammaln(alpha) - gammaln(alpha + n_items)

    grid = np.linspace(1e-6, 40, 2001)
    lw = logw(grid)
    w = np.exp(lw - lw.max())
    mean = np.trapezoid(grid * w, grid) / np.trapezoid(w, grid)
    err = abs(draws.mean() - mean)
    return _result(
        "concentration resample matches its integrated conditional",
        "spectral",
        err < 0.25,
        f"chain mean {draws.mean():.3f} vs integral {mean:.3f}",
        started,
    )


def check_latent_gradients(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(5)
    n, d, half_m, j = 6, 2, 3, 2
    X = 0.4 * rng.standard_normal((n, d))
    W = 0.6 * rng.standard_normal((half_m, d))
    prior = lk.CoefficientPrior.default(2 * half_m)
    worst = 0.0
    for kind in ("gaussian-marginalized", "poisson"):
        lik = lk.LikelihoodState(kind=kind)
        if kind == "poisson":
            Y = rng.poisson(2.0, size=(n, j)).astype(float)
            lik.beta = 0.3 * rng.standard_normal((2 * half_m, j))
        else:
            Y = rng.standard_normal((n, j))
        _, grad = lk.latent_objective_grad(Y, X, W, lik, prior)
        h = 1e-5
        for flat in rng.choice(X.size, size=6, replace=False):
            xp, xm = X.copy(), X.copy()
            xp.flat[flat] += h
            xm.flat[flat] -= h
            vp, _ = lk.latent_objective_grad(Y, xp, W, lik, prior)
            vm, _ = lk.latent_objective_grad(Y, xm, W, lik, prior)
            fd = (vp - vm) / (2 * h)
            an = grad.flat[flat]
            worst = max(worst, abs(fd - an) / (abs(fd) + abs(an) + 1e-8))
    return _result(
        "latent-coordinate gradients match finite differences",
        "likelihoods",
        worst < 1e-3,
        f"worst relative gradient error {worst:.2e}",
        started,
    )


def check_stick_breaking_identity(fast=False):
    started = time.perf_counter()
    rng_a = np.random.default_rng(6)
    rng_b = np.random.default_rng(6)
    n, m = 12, 4
    phi = np.random.default_rng(7).standard_normal((n, m))
    totals = np.random.default_rng(8).integers(1, 9, size=n).astype(float)
    y0 = np.floor(totals * np.random.default_rng(9).random(n))
    Y2 = np.column_stack([y0, totals - y0])
    beta = np.random.default_rng(10).standard_normal((m, 1))
    prior = lk.CoefficientPrior.default(m)
    b_multi, _ = lk.multinomial_pg_update(Y2, phi, beta, prior, rng_a)
    b_bin, _ = lk.logistic_pg_update(
        y0[:, None], phi, beta, prior, "binomial", rng_b, trials=totals[:, None]
    )
    same = np.array_equal(b_multi, b_bin)
    val_multi = lk.multinomial_loglik(Y2, phi @ beta)
    val_bin = lk.logistic_loglik("binomial", y0[:, None], phi @ beta, trials=totals[:, None])
    close = abs(val_multi - val_bin) < 1e-10 * (1 + abs(val_bin))
    return _result(
        "two-category stick breaking reduces exactly to binomial",
        "likelihoods",
        same and close,
        f"updates identical: {same}; log-likelihood gap {abs(val_multi - val_bin):.2e}",
        started,
    )


def check_marginal_likelihood(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(11)
    phi = rng.standard_normal((6, 2))
    y = rng.standard_normal(6)
    prior = lk.CoefficientPrior.default(2, coef_var=1.4, a0=1.2, b0=0.8)
    cov_shape = np.eye(6) + phi @ np.linalg.solve(prior.s0_prec, phi.T)
    sign, logdet = np.linalg.slogdet(cov_shape)
    resid = y - phi @ prior.beta0
    quad_form = resid @ np.linalg.solve(cov_shape, resid)
    a0, b0 = prior.a0, prior.b0

    def integrand(log_s2):
        s2 = np.exp(log_s2)
        log_gauss = -0.5 * 6 * np.log(2 * np.pi * s2) - 0.5 * logdet - quad_form / (2 * s2)
        log_ig = a0 * np.log(b0) - gammaln(a0) - (a0 + 1) * np.log(s2) - b0 / s2
        return np.exp(log_gauss + log_ig) * s2

    total, _ = integrate.quad(integrand, np.log(1e-8), np.log(1e9), limit=300)
    direct = np.log(total)
    analytic = lk.gaussian_log_marginal(y, phi, prior)
    err = abs(analytic - direct) / abs(direct)
    return _result(
        "collapsed Gaussian marginal matches numerical integration",
        "likelihoods",
        err < 1e-7,
        f"relative error {err:.2e}",
        started,
    )


def check_standardization(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(12)
    X = rng.standard_normal((60, 2)) @ np.array([[2.0, 0.4], [0.0, 0.6]])
    out = standardize_x(X)
    cov_err = np.abs(out.T @ out / 60 - np.eye(2)).max()
    idem_err = np.abs(standardize_x(out) - out).max()
    ok = cov_err < 1e-9 and idem_err < 1e-9
    return _result(
        "latent standardization whitens and is idempotent",
        "latent",
        ok,
        f"covariance error {cov_err:.2e}, rerun drift {idem_err:.2e}",
        started,
    )


def check_end_to_end(fast=False):
    started = time.perf_counter()
    rng = np.random.default_rng(13)
    X, _ = generate_s_curve(40, rng)
    data, _ = sample_gp_observations(X, 8, "gaussian", rng)
    cfg = RunConfig(
        kind="gaussian-marginalized",
        n_iterations=20 if fast else 50,
        burn_in=5,
        n_features=16,
        latent_dim=2,
        init_clusters=4,
        seed=0,
        map_steps=5,
    )
    trace = run(cfg, data)
    ll = trace.diagnostics["loglik"]
    finite = bool(np.all(np.isfinite(ll)))
    improved = ll[-5:].mean() > ll[:5].mean()
    return _result(
        "short sampler run improves the data log likelihood",
        "engine",
        finite and improved,
        f"loglik {ll[:5].mean():.1f} -> {ll[-5:].mean():.1f}, finite: {finite}",
        started,
    )


_CHECKS = (
    check_feature_kernel,
    check_pg_moments,
    check_conjugate_update,
    check_concentration_posterior,
    check_marginal_likelihood,
    check_latent_gradients,
    check_stick_breaking_identity,
    check_standardization,
    check_end_to_end,
)


def run_all(fast=False):
    """Run every check; returns the list of CheckResult."""
    out = []
    for fn in _CHECKS:
        try:
            out.append(fn(fast=fast))
        except Exception as exc:  # a crashed check is a failed check
            out.append(
                CheckResult(
                    name=fn.__name__.replace("check_", "").replace("_", " "),
                    module=fn.__module__.rsplit(".", 1)[-1],
                    passed=False,
                    detail=f"crashed: {type(exc).__name__}: {exc}",
                )
            )
    return out
