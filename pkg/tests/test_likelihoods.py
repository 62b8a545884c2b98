"""Observation models: marginal likelihoods, augmented updates, gradients.

Log-likelihood values are cross-checked against scipy's distribution pmfs,
the Gaussian marginal against numerical integration, and every analytic
gradient against central differences.
"""

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

import oracles
from rflvm import likelihoods as lk
from rflvm.exceptions import ConfigError, NumericError, ShapeError
from rflvm.features import feature_map


def _prior(m, coef_var=1.0, a0=1.0, b0=1.0):
    return lk.CoefficientPrior.default(m, coef_var=coef_var, a0=a0, b0=b0)


def _nonspherical_prior():
    s0 = np.array([[1.4, 0.3], [0.3, 0.9]])
    return lk.CoefficientPrior(
        beta0=np.array([0.4, -0.2]),
        b0_cov=np.linalg.inv(s0),
        s0_prec=s0,
        a0=1.3,
        b0=0.7,
    )


# ---------------------------------------------------------------------------
# gaussian marginal


def test_gaussian_marginal_matches_full_quadrature():
    rng = np.random.default_rng(70)
    phi = rng.standard_normal((4, 2))
    y = rng.standard_normal(4)
    prior = _nonspherical_prior()
    direct = oracles.nig_marginal_quadrature(y, phi, prior)
    analytic = lk.gaussian_log_marginal(y, phi, prior)
    np.testing.assert_allclose(analytic, direct, rtol=1e-6)


def test_gaussian_marginal_matches_convolution_identity():
    rng = np.random.default_rng(71)
    prior = _nonspherical_prior()
    for _ in range(5):
        phi = rng.standard_normal((6, 2))
        y = rng.standard_normal(6) * 1.5
        direct = oracles.nig_marginal_convolution(y, phi, prior)
        analytic = lk.gaussian_log_marginal(y, phi, prior)
        np.testing.assert_allclose(analytic, direct, rtol=1e-8)


def test_marginal_loglik_shared_path_equals_per_column():
    rng = np.random.default_rng(72)
    phi = rng.standard_normal((9, 4))
    Y = rng.standard_normal((9, 3))
    prior = _prior(4, coef_var=0.7)
    fast = lk.gaussian_marginal_loglik(Y, phi, prior)
    slow = sum(
        lk.gaussian_log_marginal(Y[:, j], phi, prior) for j in range(3)
    )
    np.testing.assert_allclose(fast, slow, rtol=1e-12)


def test_marginal_loglik_masked_drops_rows():
    rng = np.random.default_rng(73)
    phi = rng.standard_normal((8, 4))
    Y = rng.standard_normal((8, 2))
    prior = _prior(4)
    mask = np.zeros((8, 2), dtype=bool)
    mask[1, 0] = mask[5, 0] = mask[2, 1] = True
    got = lk.gaussian_marginal_loglik(Y, phi, prior, mask=mask)
    want = lk.gaussian_log_marginal(
        Y[~mask[:, 0], 0], phi[~mask[:, 0]], prior
    ) + lk.gaussian_log_marginal(Y[~mask[:, 1], 1], phi[~mask[:, 1]], prior)
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_conjugate_draws_match_posterior_moments():
    # NIG posterior: E[beta] = beta_n, E[s2] = b_n / (a_n - 1), computed
    # here with explicit arithmetic.
    rng = np.random.default_rng(74)
    phi = rng.standard_normal((30, 2))
    beta_true = np.array([1.0, -2.0])
    y = phi @ beta_true + 0.3 * rng.standard_normal(30)
    prior = _nonspherical_prior()

    a_mat = phi.T @ phi + prior.s0_prec
    h = phi.T @ y + prior.s0_prec @ prior.beta0
    beta_n = np.linalg.solve(a_mat, h)
    a_n = prior.a0 + 15.0
    b_n = prior.b0 + 0.5 * (
        y @ y + prior.beta0 @ prior.s0_prec @ prior.beta0 - beta_n @ h
    )

    draws_b = np.empty((4000, 2))
    draws_s = np.empty(4000)
    for i in range(4000):
        draws_b[i], draws_s[i] = lk.sample_beta_sigma(y, phi, prior, rng)
    np.testing.assert_allclose(draws_b.mean(axis=0), beta_n, atol=0.02)
    np.testing.assert_allclose(
        draws_s.mean(), b_n / (a_n - 1.0), rtol=0.05
    )


def test_sample_all_columns_masked_path_consistent():
    rng = np.random.default_rng(75)
    phi = rng.standard_normal((25, 3))
    Y = rng.standard_normal((25, 2))
    prior = _prior(3)
    mask = np.zeros((25, 2), dtype=bool)
    mask[::4, 0] = True
    beta, sigma2 = lk.sample_beta_sigma_all(Y, phi, prior, rng, mask=mask)
    assert beta.shape == (3, 2)
    assert sigma2.shape == (2,)
    assert np.all(sigma2 > 0)


def test_marginal_coefficients_are_conditional_means():
    rng = np.random.default_rng(76)
    phi = rng.standard_normal((12, 3))
    Y = rng.standard_normal((12, 2))
    prior = _prior(3, coef_var=2.0)
    got = lk.gaussian_marginal_coefficients(Y, phi, prior)
    a_mat = phi.T @ phi + prior.s0_prec
    for j in range(2):
        want = np.linalg.solve(a_mat, phi.T @ Y[:, j] + prior.s0_prec @ prior.beta0)
        np.testing.assert_allclose(got[:, j], want, rtol=1e-10)


# ---------------------------------------------------------------------------
# log-likelihood values against scipy


def test_gaussian_loglik_matches_scipy():
    rng = np.random.default_rng(80)
    Y = rng.standard_normal((6, 3))
    psi = rng.standard_normal((6, 3))
    sigma2 = np.array([0.5, 1.0, 2.2])
    want = stats.norm.logpdf(Y, psi, np.sqrt(sigma2)[None, :]).sum()
    np.testing.assert_allclose(
        lk.gaussian_loglik(Y, psi, sigma2), want, rtol=1e-12
    )


def test_poisson_loglik_matches_scipy():
    rng = np.random.default_rng(81)
    Y = rng.poisson(3.0, size=(7, 2)).astype(float)
    psi = rng.uniform(-2, 2, size=(7, 2))
    want = stats.poisson.logpmf(Y.astype(int), np.exp(psi)).sum()
    np.testing.assert_allclose(lk.poisson_loglik(Y, psi), want, rtol=1e-12)


def test_bernoulli_and_binomial_logliks_match_scipy():
    rng = np.random.default_rng(82)
    psi = rng.uniform(-2, 2, size=(8, 2))
    p = expit(psi)
    yb = rng.binomial(1, p).astype(float)
    want = stats.bernoulli.logpmf(yb.astype(int), p).sum()
    np.testing.assert_allclose(
        lk.logistic_loglik("bernoulli", yb, psi), want, rtol=1e-12
    )
    trials = rng.integers(1, 7, size=(8, 2)).astype(float)
    yn = rng.binomial(trials.astype(int), p).astype(float)
    want = stats.binom.logpmf(yn.astype(int), trials.astype(int), p).sum()
    np.testing.assert_allclose(
        lk.logistic_loglik("binomial", yn, psi, trials=trials), want, rtol=1e-12
    )


def test_negative_binomial_loglik_matches_scipy():
    rng = np.random.default_rng(83)
    psi = rng.uniform(-1.5, 1.5, size=(9, 2))
    r = np.array([1.3, 3.0])
    p = expit(psi)
    Y = rng.negative_binomial(r[None, :], 1 - p).astype(float)
    want = stats.nbinom.logpmf(Y.astype(int), r[None, :], 1 - p).sum()
    np.testing.assert_allclose(
        lk.logistic_loglik("negative-binomial", Y, psi, r=r), want, rtol=1e-12
    )


def test_multinomial_loglik_matches_scipy():
    # The cascade of binomial splits must reproduce the plain multinomial
    # pmf with probabilities p_j = s_j prod_{i<j} (1 - s_i), s = expit(psi).
    rng = np.random.default_rng(84)
    n_rows, j_cols = 6, 4
    psi = rng.uniform(-1.5, 1.5, size=(n_rows, j_cols - 1))
    s = expit(psi)
    probs = np.empty((n_rows, j_cols))
    stick = np.ones(n_rows)
    for j in range(j_cols - 1):
        probs[:, j] = stick * s[:, j]
        stick = stick * (1 - s[:, j])
    probs[:, -1] = stick
    Y = np.array([rng.multinomial(12, probs[i]) for i in range(n_rows)], dtype=float)
    want = sum(
        stats.multinomial.logpmf(Y[i], 12, probs[i]) for i in range(n_rows)
    )
    np.testing.assert_allclose(lk.multinomial_loglik(Y, psi), want, rtol=1e-10)


def test_multinomial_two_columns_equals_binomial():
    rng = np.random.default_rng(85)
    totals = rng.integers(1, 9, size=7).astype(float)
    y0 = np.array([rng.integers(0, int(c) + 1) for c in totals], dtype=float)
    Y = np.column_stack([y0, totals - y0])
    psi = rng.uniform(-2, 2, size=(7, 1))
    got = lk.multinomial_loglik(Y, psi)
    want = lk.logistic_loglik(
        "binomial", y0[:, None], psi, trials=totals[:, None]
    )
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_mask_additivity_over_cell_partition():
    # For cell-factorizing kinds the total is the sum of the two halves of
    # any mask partition.
    rng = np.random.default_rng(86)
    n, j = 8, 3
    psi = rng.uniform(-1.5, 1.5, size=(n, j))
    mask = rng.random((n, j)) < 0.4
    cases = []
    Yg = rng.standard_normal((n, j))
    sig = np.full(j, 0.8)
    cases.append(
        lambda m: lk.gaussian_loglik(Yg, psi, sig, mask=m)
    )
    Yp = rng.poisson(2.0, size=(n, j)).astype(float)
    cases.append(lambda m: lk.poisson_loglik(Yp, psi, mask=m))
    Yb = rng.binomial(1, expit(psi)).astype(float)
    cases.append(
        lambda m: lk.logistic_loglik("bernoulli", Yb, psi, mask=m)
    )
    r = np.array([2.0, 1.0, 3.5])
    Yn = rng.negative_binomial(r[None, :], 1 - expit(psi)).astype(float)
    cases.append(
        lambda m: lk.logistic_loglik("negative-binomial", Yn, psi, r=r, mask=m)
    )
    for f in cases:
        np.testing.assert_allclose(
            f(None), f(mask) + f(~mask), rtol=1e-10
        )


def test_stick_breaking_pieces_bookkeeping():
    Y = np.array([[3.0, 2.0, 1.0], [0.0, 0.0, 4.0], [2.0, 0.0, 0.0]])
    kappa, remaining = lk.stick_breaking_pieces(Y)
    np.testing.assert_array_equal(remaining, [[6, 3], [4, 4], [2, 0]])
    np.testing.assert_array_equal(kappa, Y[:, :2] - remaining / 2)


def test_logistic_pieces_values():
    Y = np.array([[1.0, 3.0]])
    a, b = lk.logistic_pieces("bernoulli", Y[:, :1])
    np.testing.assert_array_equal(b, [[1.0]])
    a, b = lk.logistic_pieces("negative-binomial", Y, r=np.array([2.0, 0.5]))
    np.testing.assert_array_equal(b, [[3.0, 3.5]])
    with pytest.raises(ConfigError):
        lk.logistic_pieces("binomial", Y)
    with pytest.raises(ConfigError):
        lk.logistic_pieces("negative-binomial", Y)


# ---------------------------------------------------------------------------
# augmented coefficient updates


def test_beta_moments_match_explicit_inverse():
    rng = np.random.default_rng(90)
    phi = rng.standard_normal((6, 2))
    omega = rng.uniform(0.2, 2.0, size=6)
    kappa = rng.standard_normal(6)
    prior = _nonspherical_prior()
    mean, cov = lk.beta_conditional_moments(phi, kappa, omega, prior)
    b0_inv = np.linalg.inv(prior.b0_cov)
    v = np.linalg.inv(phi.T @ np.diag(omega) @ phi + b0_inv)
    m = v @ (b0_inv @ prior.beta0 + phi.T @ kappa)
    np.testing.assert_allclose(cov, v, rtol=1e-9)
    np.testing.assert_allclose(mean, m, rtol=1e-9)


def test_zero_weights_recover_prior():
    phi = np.random.default_rng(91).standard_normal((5, 2))
    prior = _nonspherical_prior()
    mean, cov = lk.beta_conditional_moments(
        phi, np.zeros(5), np.zeros(5), prior
    )
    np.testing.assert_allclose(mean, prior.beta0, atol=1e-12)
    np.testing.assert_allclose(cov, prior.b0_cov, rtol=1e-10)


def test_inactive_column_draws_from_prior():
    # All-zero trial counts leave no likelihood: draws must have the prior's
    # mean and covariance.
    rng = np.random.default_rng(92)
    phi = rng.standard_normal((5, 2))
    prior = _nonspherical_prior()
    draws = np.array(
        [
            lk.sample_coefficients_pg(
                phi, np.zeros(5), np.zeros(5), np.zeros(5), prior, rng
            )[0]
            for _ in range(4000)
        ]
    )
    np.testing.assert_allclose(draws.mean(axis=0), prior.beta0, atol=0.06)
    np.testing.assert_allclose(np.cov(draws.T), prior.b0_cov, atol=0.08)


def test_pg_update_is_bayes_consistent_for_bernoulli():
    # With strongly informative data the augmented chain concentrates near
    # the coefficients that generated it.
    rng = np.random.default_rng(93)
    n, m = 400, 2
    phi = rng.standard_normal((n, m))
    beta_true = np.array([2.0, -1.0])
    Y = rng.binomial(1, expit(phi @ beta_true))[:, None].astype(float)
    prior = _prior(m, coef_var=10.0)
    beta = np.zeros((m, 1))
    draws = []
    for t in range(300):
        beta, _ = lk.logistic_pg_update(Y, phi, beta, prior, "bernoulli", rng)
        if t >= 100:
            draws.append(beta[:, 0].copy())
    est = np.mean(draws, axis=0)
    np.testing.assert_allclose(est, beta_true, atol=0.5)


def test_multinomial_two_column_update_equals_binomial_update():
    # Stick-breaking with two categories is exactly one binomial column, so
    # the two update paths must consume randomness identically.
    rng_a = np.random.default_rng(94)
    rng_b = np.random.default_rng(94)
    n, m = 10, 4
    phi = np.random.default_rng(95).standard_normal((n, m))
    totals = np.random.default_rng(96).integers(1, 8, size=n).astype(float)
    y0 = np.array(
        [np.random.default_rng(97 + i).integers(0, int(c) + 1) for i, c in enumerate(totals)],
        dtype=float,
    )
    Y2 = np.column_stack([y0, totals - y0])
    beta = np.random.default_rng(98).standard_normal((m, 1))
    prior = _prior(m)
    beta_multi, om_multi = lk.multinomial_pg_update(Y2, phi, beta, prior, rng_a)
    beta_bin, om_bin = lk.logistic_pg_update(
        y0[:, None], phi, beta, prior, "binomial", rng_b, trials=totals[:, None]
    )
    np.testing.assert_array_equal(beta_multi, beta_bin)
    np.testing.assert_array_equal(om_multi, om_bin)


def test_multinomial_update_requires_j_minus_one_columns():
    rng = np.random.default_rng(99)
    Y = np.abs(rng.integers(0, 5, size=(6, 3))).astype(float)
    phi = rng.standard_normal((6, 4))
    with pytest.raises(ShapeError):
        lk.multinomial_pg_update(Y, phi, np.zeros((4, 3)), _prior(4), rng)


# ---------------------------------------------------------------------------
# dispersion updates


def test_crt_counts_mean_matches_formula():
    # E[tables] = sum_{t=1..y} r / (r + t - 1).
    rng = np.random.default_rng(100)
    y, r = 12, 1.7
    expected = sum(r / (r + t - 1.0) for t in range(1, y + 1))
    draws = crt = np.array(
        [lk.crt_counts(np.array([y]), r, rng)[0] for _ in range(4000)],
        dtype=float,
    )
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - expected) < 5 * se


def test_crt_counts_bounds_and_validation():
    rng = np.random.default_rng(101)
    y = np.array([0, 1, 5])
    out = lk.crt_counts(y, 2.0, rng)
    assert out[0] == 0
    assert 0 <= out[1] <= 1
    assert 0 <= out[2] <= 5
    with pytest.raises(ShapeError):
        lk.crt_counts(np.array([1.5]), 2.0, rng)
    with pytest.raises(ConfigError):
        lk.crt_counts(y, 0.0, rng)


def test_dispersion_sampler_tracks_truth():
    # Simulated counts with known dispersion: repeated conditional draws
    # should wander around the generating value.
    rng = np.random.default_rng(102)
    n = 600
    psi = rng.uniform(-0.5, 0.5, size=n)
    r_true = 2.0
    y = rng.negative_binomial(r_true, 1 - expit(psi)).astype(float)
    r = 1.0
    draws = []
    for t in range(400):
        r = lk.sample_dispersion(y, psi, r, rng, shape0=1.0, rate0=1.0)
        if t >= 100:
            draws.append(r)
    assert abs(np.mean(draws) - r_true) < 0.5


def test_dispersion_rate_resample_is_gamma():
    rng = np.random.default_rng(103)
    r_all = np.array([1.0, 2.0, 3.0])
    draws = np.array(
        [
            lk.sample_dispersion_rate(r_all, 1.5, 2.0, 1.0, rng)
            for _ in range(20000)
        ]
    )
    shape = 2.0 + 3 * 1.5
    rate = 1.0 + 6.0
    assert abs(draws.mean() - shape / rate) < 0.02
    assert abs(draws.var() - shape / rate**2) < 0.01


def test_dispersion_survives_extreme_predictor():
    # A huge psi saturates p -> 1; the capped rate must keep the draw finite.
    rng = np.random.default_rng(104)
    y = np.array([3.0, 1.0])
    psi = np.array([800.0, 900.0])
    r = lk.sample_dispersion(y, psi, 1.0, rng)
    assert np.isfinite(r) and r > 0


# ---------------------------------------------------------------------------
# gradients


def _grad_case(kind, seed, with_mask=False):
    rng = np.random.default_rng(seed)
    n, d, half_m, j = 7, 2, 4, 3
    X = 0.4 * rng.standard_normal((n, d))
    W = 0.7 * rng.standard_normal((half_m, d))
    m = 2 * half_m
    trials = None
    lik = lk.LikelihoodState(kind=kind)
    if kind == "gaussian-marginalized":
        Y = rng.standard_normal((n, j))
    elif kind == "gaussian":
        Y = rng.standard_normal((n, j))
        lik.beta = 0.4 * rng.standard_normal((m, j))
        lik.sigma2 = np.array([0.5, 1.0, 1.7])
    elif kind == "poisson":
        Y = rng.poisson(2.0, size=(n, j)).astype(float)
        lik.beta = 0.3 * rng.standard_normal((m, j))
    elif kind == "bernoulli":
        Y = rng.binomial(1, 0.5, size=(n, j)).astype(float)
        lik.beta = 0.5 * rng.standard_normal((m, j))
    elif kind == "binomial":
        trials = rng.integers(1, 7, size=(n, j)).astype(float)
        Y = rng.binomial(trials.astype(int), 0.4).astype(float)
        lik.beta = 0.5 * rng.standard_normal((m, j))
    elif kind == "negative-binomial":
        Y = rng.poisson(2.0, size=(n, j)).astype(float)
        lik.beta = 0.3 * rng.standard_normal((m, j))
        lik.r = np.array([1.5, 2.0, 0.7])
    elif kind == "multinomial":
        Y = rng.multinomial(8, [0.5, 0.3, 0.2], size=n).astype(float)
        Y[0] = 0.0  # an all-zero row exercises the empty-stick branch
        lik.beta = 0.4 * rng.standard_normal((m, j - 1))
    mask = None
    if with_mask:
        mask = rng.random((n, j)) < 0.3
    prior = _prior(m, coef_var=1.3)
    return Y, X, W, lik, prior, mask, trials


@pytest.mark.parametrize(
    "kind",
    [
        "gaussian-marginalized",
        "gaussian",
        "poisson",
        "bernoulli",
        "binomial",
        "negative-binomial",
        "multinomial",
    ],
)
def test_latent_gradient_matches_finite_differences(kind):
    Y, X, W, lik, prior, _, trials = _grad_case(kind, seed=110)
    rng = np.random.default_rng(111)

    def vg(x):
        return lk.latent_objective_grad(Y, x, W, lik, prior, trials=trials)

    oracles.check_gradient(vg, X, rng, n_probe=10)


@pytest.mark.parametrize("kind", ["gaussian-marginalized", "poisson", "bernoulli"])
def test_latent_gradient_with_mask(kind):
    Y, X, W, lik, prior, mask, trials = _grad_case(kind, seed=112, with_mask=True)
    rng = np.random.default_rng(113)

    def vg(x):
        return lk.latent_objective_grad(
            Y, x, W, lik, prior, mask=mask, trials=trials
        )

    oracles.check_gradient(vg, X, rng, n_probe=10)


def test_poisson_coefficient_gradient_matches_finite_differences():
    rng = np.random.default_rng(114)
    n, m, j = 9, 6, 2
    phi = feature_map(0.5 * rng.standard_normal((n, 2)), rng.standard_normal((3, 2)))
    Y = rng.poisson(2.0, size=(n, j)).astype(float)
    beta0 = 0.3 * rng.standard_normal((m, j))
    prior = _prior(m, coef_var=0.8)
    mask = rng.random((n, j)) < 0.25

    def vg(b):
        return lk.poisson_coef_objective(Y, phi, b, prior, mask=mask)

    oracles.check_gradient(vg, beta0, rng, n_probe=12)


def test_latent_objective_includes_standard_normal_prior():
    # With no data columns the objective reduces to -||X||^2 / 2.
    rng = np.random.default_rng(115)
    X = rng.standard_normal((5, 2))
    W = rng.standard_normal((3, 2))
    lik = lk.LikelihoodState(kind="gaussian-marginalized")
    Y = np.zeros((5, 0))
    value, grad = lk.latent_objective_grad(Y, X, W, lik, _prior(6))
    np.testing.assert_allclose(value, -0.5 * (X**2).sum(), rtol=1e-12)
    np.testing.assert_allclose(grad, -X, rtol=1e-12)


# ---------------------------------------------------------------------------
# dispatch and clipping


def test_model_loglik_composes_feature_map():
    Y, X, W, lik, prior, _, trials = _grad_case("poisson", seed=116)
    direct = lk.model_log_likelihood(Y, X, W, lik, prior, trials=trials)
    via_phi = lk.loglik_from_features(
        Y, feature_map(X, W), lik, prior, trials=trials
    )
    np.testing.assert_allclose(direct, via_phi, rtol=1e-15)


def test_clip_psi_counts_events():
    counter = lk.ClampCounter()
    psi = np.array([0.0, 31.0, -40.0, 5.0])
    out = lk.clip_psi(psi, counter)
    assert counter.events == 2
    np.testing.assert_array_equal(out, [0.0, 30.0, -30.0, 5.0])
    lk.clip_psi(np.array([1.0]), counter)
    assert counter.events == 2


def test_unknown_kind_rejected():
    lik = lk.LikelihoodState(kind="gaussian")
    lik.kind = "nonsense"
    with pytest.raises(ConfigError):
        lk.loglik_from_features(
            np.zeros((2, 1)), np.zeros((2, 2)), lik, _prior(2)
        )
