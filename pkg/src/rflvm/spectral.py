"""Dirichlet-process Gaussian mixture over the feature-map frequencies.

The rows of the frequency matrix get a DP mixture-of-Gaussians prior with a
conjugate normal-inverse-Wishart base measure. Inference cycles through
collapsed cluster reassignment, conjugate component refreshes, a
Metropolis-Hastings move of each frequency against the model likelihood
(proposing from its component), and an augmented resample of the DP
concentration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import invwishart

from .exceptions import ConfigError, CovarianceError, NumericError, ShapeError


# ---------------------------------------------------------------------------
# hyperparameters and state


@dataclass
class NiwHyper:
    """Normal-inverse-Wishart parameters (mean, mean-strength, df, scale)."""

    mu0: np.ndarray
    lambda0: float
    nu0: float
    psi0: np.ndarray

    def __post_init__(self):
        self.mu0 = np.asarray(self.mu0, dtype=float)
        self.psi0 = np.asarray(self.psi0, dtype=float)
        d = self.mu0.shape[0]
        if self.mu0.ndim != 1 or self.psi0.shape != (d, d):
            raise ShapeError("NIW mean/scale shapes are inconsistent")
        if self.lambda0 <= 0:
            raise ConfigError("NIW lambda0 must be positive")
        if self.nu0 <= d - 1:
            raise ConfigError(f"NIW nu0 must exceed dim - 1 = {d - 1}")
        if not np.allclose(self.psi0, self.psi0.T):
            raise CovarianceError("NIW scale matrix must be symmetric")
        try:
            np.linalg.cholesky(self.psi0)
        except np.linalg.LinAlgError:
            raise CovarianceError("NIW scale matrix must be positive definite") from None

    @property
    def dim(self):
        return self.mu0.shape[0]

    @classmethod
    def default(cls, dim):
        return cls(
            mu0=np.zeros(dim), lambda0=1.0, nu0=float(dim + 2), psi0=np.eye(dim)
        )


@dataclass
class SpectralState:
    """Frequencies, their cluster labels, live components, and concentration."""

    W: np.ndarray
    z: np.ndarray
    means: list = field(default_factory=list)
    covs: list = field(default_factory=list)
    alpha: float = 1.0

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.z = np.asarray(self.z, dtype=int)
        if self.W.ndim != 2 or self.z.shape != (self.W.shape[0],):
            raise ShapeError("W must be (M/2, D) with one label per row")
        if self.alpha <= 0:
            raise ConfigError("concentration must be positive")

    @property
    def n_frequencies(self):
        return self.W.shape[0]

    @property
    def n_clusters(self):
        return len(self.means)

    def counts(self):
        # A row mid-reassignment carries label -1 and counts nowhere.
        return np.bincount(self.z[self.z >= 0], minlength=self.n_clusters)


# ---------------------------------------------------------------------------
# densities


def _chol(cov, what):
    try:
        return np.linalg.cholesky(np.asarray(cov, dtype=float))
    except np.linalg.LinAlgError:
        raise CovarianceError(f"{what} is not positive definite") from None


def gaussian_logpdf(w, mean, cov):
    L = _chol(cov, "Gaussian covariance")
    d = L.shape[0]
    diff = np.asarray(w, dtype=float) - np.asarray(mean, dtype=float)
    y = np.linalg.solve(L, diff)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + y @ y)


def student_t_logpdf(w, df, loc, shape_matrix):
    L = _chol(shape_matrix, "Student-t shape matrix")
    d = L.shape[0]
    diff = np.asarray(w, dtype=float) - np.asarray(loc, dtype=float)
    y = np.linalg.solve(L, diff)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    quad = y @ y
    return (
        gammaln((df + d) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * d * np.log(df * np.pi)
        - 0.5 * logdet
        - 0.5 * (df + d) * np.log1p(quad / df)
    )


# ---------------------------------------------------------------------------
# conjugate updates


def niw_posterior_params(members, hyper):
    """Posterior NIW parameters given member rows (n x D)."""
    members = np.asarray(members, dtype=float)
    if members.ndim != 2 or members.shape[1] != hyper.dim:
        raise ShapeError("member rows must be (n, D)")
    n = members.shape[0]
    if n == 0:
        return hyper
    wbar = members.mean(axis=0)
    centered = members - wbar
    scatter = centered.T @ centered
    lam_n = hyper.lambda0 + n
    nu_n = hyper.nu0 + n
    mu_n = (hyper.lambda0 * hyper.mu0 + n * wbar) / lam_n
    dev = wbar - hyper.mu0
    psi_n = (
        hyper.psi0
        + scatter
        + (hyper.lambda0 * n / lam_n) * np.outer(dev, dev)
    )
    return NiwHyper(mu0=mu_n, lambda0=lam_n, nu0=nu_n, psi0=psi_n)


def sample_niw(hyper, rng):
    """One (mean, covariance) draw from a normal-inverse-Wishart."""
    cov = invwishart.rvs(df=hyper.nu0, scale=hyper.psi0, random_state=rng)
    cov = np.atleast_2d(cov)
    L = _chol(cov / hyper.lambda0, "NIW mean covariance")
    mean = hyper.mu0 + L @ rng.standard_normal(hyper.dim)
    return mean, cov


def log_predictive(w, hyper):
    """Log density of the NIW predictive (a multivariate Student-t) at w."""
    d = hyper.dim
    df = hyper.nu0 - d + 1.0
    if df <= 0:
        raise ConfigError("predictive needs nu0 > dim - 1")
    shape_matrix = hyper.psi0 * (hyper.lambda0 + 1.0) / (hyper.lambda0 * df)
    return student_t_logpdf(w, df, hyper.mu0, shape_matrix)


# ---------------------------------------------------------------------------
# cluster bookkeeping


def compact_clusters(state):
    """Drop empty components and relabel assignments densely."""
    counts = state.counts()
    keep = np.flatnonzero(counts > 0)
    if keep.size == len(state.means):
        return
    relabel = -np.ones(len(state.means), dtype=int)
    relabel[keep] = np.arange(keep.size)
    state.means = [state.means[k] for k in keep]
    state.covs = [state.covs[k] for k in keep]
    state.z = relabel[state.z]


def _detach(state, m):
    """Remove row m from its cluster, pruning the component if it empties."""
    k = state.z[m]
    state.z[m] = -1
    if not np.any(state.z == k):
        del state.means[k]
        del state.covs[k]
        state.z[state.z > k] -= 1


def assignment_log_weights(state, m, hyper, prior_only=False):
    """Unnormalized log weights over live components plus one new-cluster slot.

    Weights are computed with row m held out; its own component is pruned
    from the candidate list if m is its only member. Returns (log_weights,
    candidate_count) where the final entry is the new-cluster option.
    """
    k_own = state.z[m]
    counts = state.counts().astype(float)
    if k_own >= 0:
        counts[k_own] -= 1.0
    live = [k for k in range(state.n_clusters) if counts[k] > 0]
    logw = np.empty(len(live) + 1)
    w_m = state.W[m]
    for i, k in enumerate(live):
        logw[i] = np.log(counts[k])
        if not prior_only:
            logw[i] += gaussian_logpdf(w_m, state.means[k], state.covs[k])
    logw[-1] = np.log(state.alpha)
    if not prior_only:
        logw[-1] += log_predictive(w_m, hyper)
    if not np.all(np.isfinite(logw)):
        raise NumericError("non-finite assignment weight")
    return logw, live


def assignment_probabilities(state, m, hyper, prior_only=False):
    """Normalized reassignment distribution for row m (existing..., new)."""
    logw, _ = assignment_log_weights(state, m, hyper, prior_only)
    p = np.exp(logw - logw.max())
    return p / p.sum()


def sample_assignment(state, m, hyper, rng, prior_only=False):
    """Gibbs-reassign row m, instantiating a new component if drawn."""
    _detach(state, m)
    logw, live = assignment_log_weights(state, m, hyper, prior_only)
    p = np.exp(logw - logw.max())
    p /= p.sum()
    choice = rng.choice(p.size, p=p)
    if choice < len(live):
        state.z[m] = live[choice]
    else:
        if prior_only:
            mean, cov = sample_niw(hyper, rng)
        else:
            post = niw_posterior_params(state.W[m][None, :], hyper)
            mean, cov = sample_niw(post, rng)
        state.means.append(mean)
        state.covs.append(cov)
        state.z[m] = state.n_clusters - 1
    return state.z[m]


def assignment_sweep(state, hyper, rng, prior_only=False):
    for m in range(state.n_frequencies):
        sample_assignment(state, m, hyper, rng, prior_only)


def update_component(state, k, hyper, rng):
    """Conjugate refresh of component k from its members (requires n_k >= 1)."""
    members = state.W[state.z == k]
    if members.shape[0] == 0:
        raise ConfigError(f"component {k} has no members")
    post = niw_posterior_params(members, hyper)
    state.means[k], state.covs[k] = sample_niw(post, rng)


def component_sweep(state, hyper, rng):
    for k in range(state.n_clusters):
        update_component(state, k, hyper, rng)


# ---------------------------------------------------------------------------
# frequency Metropolis-Hastings


@dataclass
class MhStats:
    proposed: int = 0
    accepted: int = 0
    nonfinite: int = 0

    @property
    def rate(self):
        return self.accepted / self.proposed if self.proposed else 0.0


def mh_update_frequency(state, m, log_likelihood, rng, current=None, chol_cache=None):
    """One prior-proposal MH move of frequency m.

    ``log_likelihood`` maps a candidate frequency matrix to the model's data
    log likelihood; prior terms cancel because the proposal is the row's own
    mixture component. Returns (accepted, log-likelihood value, nonfinite).
    """
    if current is None:
        current = log_likelihood(state.W)
    k = state.z[m]
    if chol_cache is not None:
        L = chol_cache.get(k)
        if L is None:
            L = _chol(state.covs[k], "component covariance")
            chol_cache[k] = L
    else:
        L = _chol(state.covs[k], "component covariance")
    proposal = state.means[k] + L @ rng.standard_normal(state.W.shape[1])
    saved = state.W[m].copy()
    state.W[m] = proposal
    candidate = log_likelihood(state.W)
    log_ratio = candidate - current
    if not np.isfinite(log_ratio):
        state.W[m] = saved
        return False, current, True
    if np.log(rng.uniform()) < min(0.0, log_ratio):
        return True, candidate, False
    state.W[m] = saved
    return False, current, False


def mh_sweep(state, log_likelihood, rng):
    """Deterministic-order MH sweep over every frequency row."""
    stats = MhStats()
    current = log_likelihood(state.W)
    if not np.isfinite(current):
        raise NumericError("log likelihood is non-finite at the current state")
    chol_cache = {}
    for m in range(state.n_frequencies):
        accepted, current, nonfinite = mh_update_frequency(
            state, m, log_likelihood, rng, current=current, chol_cache=chol_cache
        )
        stats.proposed += 1
        stats.accepted += int(accepted)
        stats.nonfinite += int(nonfinite)
    return stats


# ---------------------------------------------------------------------------
# concentration


def sample_concentration(state, a_alpha, b_alpha, rng):
    """Augmented Gamma-mixture resample of the DP concentration.

    Uses the number of clustered items (M/2 frequencies) and the live cluster
    count; updates state.alpha in place and returns the new value.
    """
    if a_alpha <= 0 or b_alpha <= 0:
        raise ConfigError("concentration prior parameters must be positive")
    n_items = state.n_frequencies
    k = state.n_clusters
    eta = rng.beta(state.alpha + 1.0, n_items)
    rate = b_alpha - np.log(eta)
    odds = (a_alpha + k - 1.0) / (n_items * rate)
    pi_eta = odds / (1.0 + odds)
    shape = a_alpha + k if rng.uniform() < pi_eta else a_alpha + k - 1.0
    alpha = rng.gamma(shape, 1.0 / rate)
    if not np.isfinite(alpha) or alpha <= 0:
        raise NumericError("concentration resample produced an invalid value")
    state.alpha = float(alpha)
    return state.alpha


# ---------------------------------------------------------------------------
# initialization helper


def crp_init_assignments(n_items, alpha, max_clusters, rng):
    """Sequential restaurant-process labels, opening at most ``max_clusters``."""
    if n_items < 1 or max_clusters < 1:
        raise ConfigError("need at least one item and one cluster")
    z = np.zeros(n_items, dtype=int)
    counts = [1]
    for m in range(1, n_items):
        weights = np.array(counts, dtype=float)
        if len(counts) < max_clusters:
            weights = np.append(weights, alpha)
        p = weights / weights.sum()
        k = rng.choice(p.size, p=p)
        if k == len(counts):
            counts.append(1)
        else:
            counts[k] += 1
        z[m] = k
    return z
