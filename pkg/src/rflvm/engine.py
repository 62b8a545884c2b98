"""The Gibbs engine: configuration, state, the sweep, and full runs.

Each iteration runs a fixed stage order: (1) cluster reassignment of every
frequency, (2) conjugate component refreshes, (3) Metropolis-Hastings moves
of each frequency against the data likelihood, (4) the DP concentration,
(5) likelihood parameters, (6) a budgeted MAP ascent of the latent
coordinates, and (7) latent standardization. Randomness is split into one
named substream per stage from the single run seed, so a run is a pure
function of (config, data, seed) and disabling one stage leaves the other
stages' draws untouched.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from . import likelihoods as lk
from .data import KINDS, ObservationMatrix
from .exceptions import ConfigError, CovarianceError, NumericError, RflvmError
from .features import feature_map, rephase_coefficients, sample_frequencies
from .latent import (
    OptimizerBudget,
    map_update_x,
    pca_initialize,
    procrustes_rotation,
    standardize_x,
)
from .spectral import (
    NiwHyper,
    SpectralState,
    assignment_sweep,
    component_sweep,
    crp_init_assignments,
    mh_sweep,
    sample_concentration,
    sample_niw,
)

STAGES = (
    "assignments",
    "components",
    "frequencies",
    "concentration",
    "coefficients",
    "latent",
    "standardize",
)

_STREAM_NAMES = (
    "init",
    "assignments",
    "components",
    "frequencies",
    "concentration",
    "coefficients",
)

DIAGNOSTIC_COLUMNS = (
    "iteration",
    "loglik",
    "alpha",
    "n_clusters",
    "mh_accept_rate",
    "mh_nonfinite",
    "clamp_events",
)


@dataclass
class RunConfig:
    """Everything a run needs besides the data and nothing it can derive."""

    kind: str
    n_iterations: int = 2000
    burn_in: int = 1000
    n_features: int = 100
    latent_dim: int = 2
    init_clusters: int = 20
    alpha0: float = 1.0
    seed: int = 0
    thinning: int = 1
    niw_lambda: float = 1.0
    niw_nu: Optional[float] = None
    niw_scale: float = 1.0
    a_alpha: float = 1.0
    b_alpha: float = 1.0
    coef_var: float = 1.0
    noise_a0: float = 1.0
    noise_b0: float = 1.0
    dispersion_shape: float = 1.0
    dispersion_hyper_shape: float = 1.0
    dispersion_hyper_rate: float = 1.0
    resample_dispersion_rate: bool = False
    map_steps: int = 20
    map_step0: float = 1e-2
    map_tol: float = 1e-6
    disabled_stages: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(
                f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}"
            )
        if self.n_features < 2 or self.n_features % 2:
            raise ConfigError("n_features must be an even number >= 2")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.n_iterations < 1 or not 0 <= self.burn_in < self.n_iterations:
            raise ConfigError("need 0 <= burn_in < n_iterations")
        if self.thinning < 1:
            raise ConfigError("thinning must be >= 1")
        if self.init_clusters < 1:
            raise ConfigError("init_clusters must be >= 1")
        if self.alpha0 <= 0 or self.a_alpha <= 0 or self.b_alpha <= 0:
            raise ConfigError("concentration parameters must be positive")
        if self.coef_var <= 0 or self.niw_lambda <= 0 or self.niw_scale <= 0:
            raise ConfigError("prior scales must be positive")
        if self.niw_nu is not None and self.niw_nu <= self.latent_dim - 1:
            raise ConfigError("niw_nu must exceed latent_dim - 1")
        self.disabled_stages = tuple(self.disabled_stages)
        for name in self.disabled_stages:
            if name not in STAGES:
                raise ConfigError(
                    f"unknown stage {name!r}; stages are {', '.join(STAGES)}"
                )

    def niw_hyper(self):
        d = self.latent_dim
        nu = float(d + 2) if self.niw_nu is None else float(self.niw_nu)
        return NiwHyper(
            mu0=np.zeros(d),
            lambda0=self.niw_lambda,
            nu0=nu,
            psi0=self.niw_scale * np.eye(d),
        )

    def coefficient_prior(self):
        return lk.CoefficientPrior.default(
            self.n_features,
            coef_var=self.coef_var,
            a0=self.noise_a0,
            b0=self.noise_b0,
        )

    def budget(self):
        return OptimizerBudget(
            max_steps=self.map_steps, step0=self.map_step0, tol=self.map_tol
        )

    def to_dict(self):
        out = asdict(self)
        out["disabled_stages"] = list(self.disabled_stages)
        return out


def make_streams(seed):
    """One independent generator per named stage, all derived from one seed."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(_STREAM_NAMES))
    return {name: np.random.default_rng(c) for name, c in zip(_STREAM_NAMES, children)}


@dataclass
class ModelState:
    X: np.ndarray
    spectral: SpectralState
    lik: lk.LikelihoodState


@dataclass
class PosteriorTrace:
    """Diagnostics for every iteration plus post-burn-in parameter records."""

    config: RunConfig
    diagnostics: dict = field(default_factory=dict)
    kept_iterations: list = field(default_factory=list)
    X_samples: list = field(default_factory=list)
    W_samples: list = field(default_factory=list)
    z_samples: list = field(default_factory=list)
    alpha_samples: list = field(default_factory=list)
    beta_samples: list = field(default_factory=list)
    sigma2_samples: list = field(default_factory=list)
    r_samples: list = field(default_factory=list)
    runtime_seconds: float = 0.0

    @property
    def n_records(self):
        return len(self.X_samples)

    def _frame_rotations(self):
        """One orthogonal matrix per record, aligning its latent frame to the
        last record's.

        Standardized samples still differ by free rotations (near-isotropic
        configurations make the SVD basis jump between sweeps), and rotating
        X and W together leaves every prediction unchanged, so element-wise
        averaging is only meaningful after this gauge is fixed.
        """
        if not self.X_samples:
            raise ConfigError("trace holds no post-burn-in records")
        reference = self.X_samples[-1]
        return [procrustes_rotation(x, reference) for x in self.X_samples]

    def posterior_mean_x(self):
        if not self.X_samples:
            raise ConfigError("trace holds no post-burn-in records")
        rotations = self._frame_rotations()
        return np.mean(
            [x @ r for x, r in zip(self.X_samples, rotations)], axis=0
        )

    def posterior_means(self):
        """Element-wise posterior means of every recorded parameter, with all
        latent frames aligned to the final record before averaging."""
        rotations = self._frame_rotations()
        out = {
            "X": np.mean(
                [x @ r for x, r in zip(self.X_samples, rotations)], axis=0
            ),
            "W": np.mean(
                [w @ r for w, r in zip(self.W_samples, rotations)], axis=0
            ),
        }
        if self.beta_samples and self.beta_samples[0] is not None:
            out["beta"] = np.mean(self.beta_samples, axis=0)
        if self.sigma2_samples and self.sigma2_samples[0] is not None:
            out["sigma2"] = np.mean(self.sigma2_samples, axis=0)
        if self.r_samples and self.r_samples[0] is not None:
            out["r"] = np.mean(self.r_samples, axis=0)
        return out

    def diagnostics_matrix(self):
        cols = [np.asarray(self.diagnostics[c], dtype=float) for c in DIAGNOSTIC_COLUMNS]
        return np.column_stack(cols)


def _data_family(kind):
    return "gaussian" if kind.startswith("gaussian") else kind


def initialize_state(config, data, streams):
    """Starting state: PCA latent coordinates, capped sequential-CRP clusters,
    prior component/frequency/parameter draws."""
    rng = streams["init"]
    n, j_cols = data.Y.shape
    d = config.latent_dim
    if j_cols == 0:
        x0 = rng.standard_normal((n, d))
    else:
        x0 = pca_initialize(data.Y, d, mask=data.mask)
    hyper = config.niw_hyper()
    half_m = config.n_features // 2
    z = crp_init_assignments(half_m, config.alpha0, config.init_clusters, rng)
    n_comp = int(z.max()) + 1
    means, covs = [], []
    for _ in range(n_comp):
        mu, cov = sample_niw(hyper, rng)
        means.append(mu)
        covs.append(cov)
    w = sample_frequencies(z, means, covs, rng)
    spectral = SpectralState(W=w, z=z, means=means, covs=covs, alpha=config.alpha0)

    prior = config.coefficient_prior()
    m = config.n_features
    kind = config.kind
    n_beta_cols = j_cols - 1 if kind == "multinomial" else j_cols
    lik = lk.LikelihoodState(kind=kind)
    if kind == "gaussian-marginalized":
        lik.beta = np.zeros((m, n_beta_cols))
    elif kind == "gaussian":
        lik.sigma2 = np.empty(j_cols)
        lik.beta = np.empty((m, j_cols))
        l0 = np.linalg.cholesky(prior.s0_prec)
        from scipy.linalg import solve_triangular

        for j in range(j_cols):
            lik.sigma2[j] = prior.b0 / rng.standard_gamma(prior.a0)
            z_draw = rng.standard_normal(m)
            lik.beta[:, j] = prior.beta0 + np.sqrt(lik.sigma2[j]) * solve_triangular(
                l0, z_draw, trans="T", lower=True
            )
    else:
        lb = np.linalg.cholesky(prior.b0_cov)
        lik.beta = prior.beta0[:, None] + lb @ rng.standard_normal((m, n_beta_cols))
        if kind == "negative-binomial":
            lik.h_rate = config.dispersion_hyper_rate / config.dispersion_hyper_shape
            lik.r = rng.gamma(
                config.dispersion_shape, 1.0 / lik.h_rate, size=j_cols
            )
            lik.r = np.maximum(lik.r, 1e-3)
    return ModelState(X=x0, spectral=spectral, lik=lik)


def _check_finite(state, iteration, stage):
    pieces = [state.X, state.spectral.W]
    if state.lik.beta is not None:
        pieces.append(state.lik.beta)
    for arr in pieces:
        if not np.all(np.isfinite(arr)):
            raise NumericError(
                f"iteration {iteration}, stage {stage!r}: non-finite state"
            )


def gibbs_step(state, data, config, hyper, prior, streams, counter, iteration=0):
    """One full sweep. Mutates ``state``; returns the iteration diagnostics."""
    Y, mask, trials = data.Y, data.mask, data.trials
    disabled = set(config.disabled_stages)
    j_cols = Y.shape[1]
    no_data = j_cols == 0

    def loglik_of(w_candidate):
        return lk.model_log_likelihood(
            Y, state.X, w_candidate, state.lik, prior,
            mask=mask, trials=trials, counter=counter,
        )

    mh_stats = None
    clamp_before = counter.events
    stage = "assignments"
    try:
        if stage not in disabled:
            assignment_sweep(state.spectral, hyper, streams["assignments"])
        _check_finite(state, iteration, stage)

        stage = "components"
        if stage not in disabled:
            component_sweep(state.spectral, hyper, streams["components"])
        _check_finite(state, iteration, stage)

        stage = "frequencies"
        if stage not in disabled:
            mh_stats = mh_sweep(state.spectral, loglik_of, streams["frequencies"])
        _check_finite(state, iteration, stage)

        stage = "concentration"
        if stage not in disabled:
            sample_concentration(
                state.spectral, config.a_alpha, config.b_alpha, streams["concentration"]
            )

        stage = "coefficients"
        if stage not in disabled and not no_data:
            _update_coefficients(state, data, config, prior, streams, counter)
        _check_finite(state, iteration, stage)

        stage = "latent"
        if stage not in disabled and not no_data:
            def x_objective(x_candidate):
                return lk.latent_objective_grad(
                    Y, x_candidate, state.spectral.W, state.lik, prior,
                    mask=mask, trials=trials, counter=counter,
                )

            state.X, _ = map_update_x(state.X, x_objective, config.budget())
        _check_finite(state, iteration, stage)

        stage = "standardize"
        if stage not in disabled and not no_data:
            # Standardization recenters X; rotating each coefficient pair by
            # the matching phase keeps the linear predictor exactly unchanged,
            # so only the (unidentifiable) rotation/scale part perturbs it.
            shift = state.X.mean(axis=0)
            if state.lik.beta is not None:
                state.lik.beta = rephase_coefficients(
                    state.lik.beta, state.spectral.W, shift
                )
            state.X = standardize_x(state.X)
        _check_finite(state, iteration, stage)
    except (NumericError, CovarianceError) as exc:
        raise NumericError(f"iteration {iteration}, stage {stage!r}: {exc}") from exc
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"iteration {iteration}, stage {stage!r}: linear algebra failure: {exc}"
        ) from exc

    loglik = loglik_of(state.spectral.W)
    return {
        "iteration": iteration,
        "loglik": loglik,
        "alpha": state.spectral.alpha,
        "n_clusters": state.spectral.n_clusters,
        "mh_accept_rate": mh_stats.rate if mh_stats else 0.0,
        "mh_nonfinite": mh_stats.nonfinite if mh_stats else 0,
        "clamp_events": counter.events - clamp_before,
    }


def _update_coefficients(state, data, config, prior, streams, counter):
    Y, mask, trials = data.Y, data.mask, data.trials
    rng = streams["coefficients"]
    kind = config.kind
    phi = feature_map(state.X, state.spectral.W)
    if kind == "gaussian-marginalized":
        state.lik.beta = lk.gaussian_marginal_coefficients(Y, phi, prior, mask=mask)
    elif kind == "gaussian":
        state.lik.beta, state.lik.sigma2 = lk.sample_beta_sigma_all(
            Y, phi, prior, rng, mask=mask
        )
    elif kind == "poisson":
        def coef_objective(beta):
            return lk.poisson_coef_objective(
                Y, phi, beta, prior, mask=mask, counter=counter
            )

        from .latent import gradient_ascent

        state.lik.beta, _ = gradient_ascent(
            state.lik.beta, coef_objective, config.budget()
        )
    elif kind in lk.LOGISTIC_KINDS:
        state.lik.beta, state.lik.omega = lk.logistic_pg_update(
            Y, phi, state.lik.beta, prior, kind, rng,
            r=state.lik.r, trials=trials, mask=mask,
        )
        if kind == "negative-binomial":
            obs = None if mask is None else ~mask
            for j in range(Y.shape[1]):
                psi_j = phi @ state.lik.beta[:, j]
                state.lik.r[j] = lk.sample_dispersion(
                    Y[:, j], psi_j, state.lik.r[j], rng,
                    shape0=config.dispersion_shape, rate0=state.lik.h_rate,
                    obs=None if obs is None else obs[:, j],
                )
            if config.resample_dispersion_rate:
                state.lik.h_rate = lk.sample_dispersion_rate(
                    state.lik.r,
                    config.dispersion_shape,
                    config.dispersion_hyper_shape,
                    config.dispersion_hyper_rate,
                    rng,
                )
    elif kind == "multinomial":
        state.lik.beta, state.lik.omega = lk.multinomial_pg_update(
            Y, phi, state.lik.beta, prior, rng, mask=mask
        )
    else:  # pragma: no cover - guarded by RunConfig
        raise ConfigError(f"unknown kind {kind!r}")


def run(config, data):
    """Run the sampler and return its trace."""
    if not isinstance(data, ObservationMatrix):
        raise ConfigError("data must be an ObservationMatrix")
    if _data_family(data.kind) != _data_family(config.kind):
        raise ConfigError(
            f"data kind {data.kind!r} does not match config kind {config.kind!r}"
        )
    started = time.perf_counter()
    streams = make_streams(config.seed)
    state = initialize_state(config, data, streams)
    hyper = config.niw_hyper()
    prior = config.coefficient_prior()
    counter = lk.ClampCounter()
    trace = PosteriorTrace(config=config)
    diag = {name: [] for name in DIAGNOSTIC_COLUMNS}
    for t in range(1, config.n_iterations + 1):
        row = gibbs_step(
            state, data, config, hyper, prior, streams, counter, iteration=t
        )
        for name in DIAGNOSTIC_COLUMNS:
            diag[name].append(row[name])
        if t > config.burn_in and (t - config.burn_in) % config.thinning == 0:
            trace.kept_iterations.append(t)
            trace.X_samples.append(state.X.copy())
            trace.W_samples.append(state.spectral.W.copy())
            trace.z_samples.append(state.spectral.z.copy())
            trace.alpha_samples.append(state.spectral.alpha)
            trace.beta_samples.append(
                None if state.lik.beta is None else state.lik.beta.copy()
            )
            trace.sigma2_samples.append(
                None if state.lik.sigma2 is None else state.lik.sigma2.copy()
            )
            trace.r_samples.append(None if state.lik.r is None else state.lik.r.copy())
    trace.diagnostics = {k: np.asarray(v, dtype=float) for k, v in diag.items()}
    trace.runtime_seconds = time.perf_counter() - started
    return trace


def run_chains(config, data, n_chains):
    """Independent chains; chain i reruns the config with seed + i."""
    if n_chains < 1:
        raise ConfigError("need at least one chain")
    return [
        run(replace(config, seed=config.seed + i), data) for i in range(n_chains)
    ]


def _predicted_mean_one(kind, phi, beta, r, data):
    if kind == "gaussian-marginalized" or kind == "gaussian":
        return phi @ beta
    psi = phi @ beta
    if kind == "poisson":
        return np.exp(lk.clip_psi(psi))
    if kind == "bernoulli":
        return expit(psi)
    if kind == "binomial":
        return np.asarray(data.trials, dtype=float) * expit(psi)
    if kind == "negative-binomial":
        return r[None, :] * np.exp(lk.clip_psi(psi))
    if kind == "multinomial":
        stick = expit(psi)
        n, j1 = stick.shape
        probs = np.empty((n, j1 + 1))
        leftover = np.ones(n)
        for j in range(j1):
            probs[:, j] = leftover * stick[:, j]
            leftover = leftover * (1.0 - stick[:, j])
        probs[:, j1] = leftover
        totals = data.Y.sum(axis=1, keepdims=True)
        return totals * probs
    raise ConfigError(f"unknown kind {kind!r}")


def posterior_predictive_mean(trace, data):
    """Predicted mean of every cell, averaged over the kept posterior samples.

    Each sample's prediction uses its own latent coordinates, frequencies, and
    coefficients, so the average is invariant to the rotation ambiguity that
    makes parameter-wise means unreliable.
    """
    if trace.n_records == 0:
        raise ConfigError("trace holds no recorded samples")
    kind = trace.config.kind
    total = None
    for i in range(trace.n_records):
        phi = feature_map(trace.X_samples[i], trace.W_samples[i])
        pred = _predicted_mean_one(
            kind, phi, trace.beta_samples[i], trace.r_samples[i], data
        )
        total = pred if total is None else total + pred
    return total / trace.n_records


def trace_blocks(trace):
    """Numeric blocks for the trace file: diagnostics, kept alphas, mean X."""
    blocks = {
        "diagnostics": trace.diagnostics_matrix(),
        "x_mean": trace.posterior_mean_x(),
        "kept_alpha": np.asarray(trace.alpha_samples, dtype=float)[:, None],
    }
    columns = {"diagnostics": list(DIAGNOSTIC_COLUMNS), "kept_alpha": ["alpha"]}
    return blocks, columns
