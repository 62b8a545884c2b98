"""Random-feature latent variable models.

Nonlinear dimension reduction for count, binary, and real-valued matrices:
a Gaussian-process prior over row embeddings is approximated with random
sinusoidal features whose frequencies carry a Dirichlet-process mixture
prior, so the kernel is learned alongside the embedding. Inference is a
Gibbs sweep with conjugate updates where they exist (Gaussian noise,
logit-family models via Polya-Gamma augmentation) and gradient-based MAP
steps where they do not (Poisson coefficients, the latent coordinates).
"""

from .data import (
    KINDS,
    ObservationMatrix,
    SyntheticTruth,
    generate_s_curve,
    load_observations_csv,
    make_holdout_mask,
    rbf_kernel,
    read_labels,
    read_matrix_csv,
    read_report,
    read_trace,
    sample_gp_observations,
    write_labels,
    write_matrix_csv,
    write_report,
    write_trace,
)
from .engine import (
    ModelState,
    PosteriorTrace,
    RunConfig,
    gibbs_step,
    initialize_state,
    make_streams,
    posterior_predictive_mean,
    run,
    run_chains,
    trace_blocks,
)
from .evaluation import (
    EvalReport,
    affine_align_r2,
    heldout_mse,
    knn_cv_accuracy,
    stratified_folds,
)
from .exceptions import (
    ConfigError,
    CovarianceError,
    DataError,
    NumericError,
    RflvmError,
    ShapeError,
)
from .features import approximate_kernel, feature_map, sample_frequencies
from .latent import OptimizerBudget, gradient_ascent, pca_initialize, standardize_x
from .likelihoods import (
    CoefficientPrior,
    LikelihoodState,
    gaussian_log_marginal,
    model_log_likelihood,
)
from .pg import pg_mean, pg_var, sample_pg
from .spectral import NiwHyper, SpectralState

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "CoefficientPrior",
    "ConfigError",
    "CovarianceError",
    "DataError",
    "EvalReport",
    "LikelihoodState",
    "ModelState",
    "NiwHyper",
    "NumericError",
    "ObservationMatrix",
    "OptimizerBudget",
    "PosteriorTrace",
    "RflvmError",
    "RunConfig",
    "ShapeError",
    "SpectralState",
    "SyntheticTruth",
    "affine_align_r2",
    "approximate_kernel",
    "feature_map",
    "gaussian_log_marginal",
    "generate_s_curve",
    "gibbs_step",
    "gradient_ascent",
    "heldout_mse",
    "initialize_state",
    "knn_cv_accuracy",
    "load_observations_csv",
    "make_holdout_mask",
    "make_streams",
    "model_log_likelihood",
    "pca_initialize",
    "pg_mean",
    "pg_var",
    "posterior_predictive_mean",
    "rbf_kernel",
    "read_labels",
    "read_matrix_csv",
    "read_report",
    "read_trace",
    "run",
    "run_chains",
    "sample_frequencies",
    "sample_gp_observations",
    "sample_pg",
    "standardize_x",
    "stratified_folds",
    "trace_blocks",
    "write_labels",
    "write_matrix_csv",
    "write_report",
    "write_trace",
]
