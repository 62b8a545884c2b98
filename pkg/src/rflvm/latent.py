"""Latent-coordinate estimation: initialization, MAP ascent, standardization.

The latent matrix X is never sampled; it is initialized from PCA scores,
moved by a budgeted monotone gradient ascent on the log posterior each
sweep, and then standardized so its (uncentered, 1/N) sample covariance is
the identity with columns ordered by singular value and a fixed sign
convention. Standardizing pins down the rotation/scale the model likelihood
cannot identify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NumericError, ShapeError

# already-white inputs keep their basis: a degenerate singular spectrum makes
# the SVD basis arbitrary, which would break idempotence
_WHITE_TOL = 1e-10
_RANK_TOL = 1e-12


@dataclass
class OptimizerBudget:
    """Budget for one MAP refinement: step count, initial step, stop tolerance."""

    max_steps: int = 20
    step0: float = 1e-2
    tol: float = 1e-6
    max_halvings: int = 30

    def __post_init__(self):
        if self.max_steps < 1 or self.max_halvings < 1:
            raise ConfigError("optimizer budget counts must be >= 1")
        if self.step0 <= 0 or self.tol < 0:
            raise ConfigError("optimizer step must be positive, tol nonnegative")


def pca_initialize(Y, n_dims, mask=None):
    """Leading principal-component scores of Y, columns scaled to unit variance.

    Held-out cells (mask True) are filled with their column's observed mean
    before the decomposition so they carry no information.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ShapeError("Y must be a matrix")
    n, j_cols = Y.shape
    if n_dims < 1 or n_dims >= min(n, j_cols):
        raise ConfigError(
            f"latent dimension {n_dims} needs 1 <= D < min(N, J) = {min(n, j_cols)}"
        )
    work = Y.copy()
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != Y.shape:
            raise ShapeError("mask shape does not match data")
        for j in range(j_cols):
            col_obs = work[~mask[:, j], j]
            fill = col_obs.mean() if col_obs.size else 0.0
            work[mask[:, j], j] = fill
    centered = work - work.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    scores = u[:, :n_dims] * s[:n_dims]
    stds = scores.std(axis=0)
    if np.any(stds < _RANK_TOL):
        raise NumericError("data has no variance along a requested component")
    return scores / stds


def gradient_ascent(x0, value_and_grad, budget):
    """Monotone gradient ascent with backtracking halving.

    Accepts a step only if the objective does not decrease; returns
    (x, value) after the budget, convergence, or a failed line search.
    """
    x = np.asarray(x0, dtype=float).copy()
    value, grad = value_and_grad(x)
    if not np.isfinite(value):
        raise NumericError("objective is non-finite at the starting point")
    for _ in range(budget.max_steps):
        gmax = np.abs(grad).max()
        if gmax <= budget.tol * (1.0 + abs(value)):
            break
        step = budget.step0
        accepted = False
        for _ in range(budget.max_halvings):
            candidate = x + step * grad
            cand_value, cand_grad = value_and_grad(candidate)
            if np.isfinite(cand_value) and cand_value >= value:
                x, value, grad = candidate, cand_value, cand_grad
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return x, value


def map_update_x(X, value_and_grad, budget):
    """MAP refinement of the latent coordinates (see ``gradient_ascent``)."""
    return gradient_ascent(X, value_and_grad, budget)


def procrustes_rotation(source, target):
    """Orthogonal D x D matrix R (rotation or reflection) minimizing
    ||source @ R - target||_F.

    Standardization leaves the latent frame free to spin: any rotation of a
    standardized matrix is still standardized, and when the configuration is
    near-isotropic the SVD basis jumps between iterations. Aligning frames
    with this map before comparing or averaging samples removes exactly that
    freedom and nothing else.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape:
        raise ShapeError(
            f"shape mismatch: {source.shape} vs {target.shape}"
        )
    u, _, vt = np.linalg.svd(source.T @ target)
    return u @ vt


def standardize_x(X):
    """Center and rotate/rescale X so its sample covariance is I.

    Columns are the leading left singular vectors of the centered matrix
    scaled by sqrt(N), ordered by descending singular value, each signed so
    its largest-magnitude entry is positive. A shift of the latent points is
    absorbed exactly by re-phasing the sinusoidal features, so centering
    loses nothing. Inputs that are already standard keep their column basis.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < X.shape[1]:
        raise ShapeError("X must be (N, D) with N >= D")
    n, d = X.shape
    centered = X - X.mean(axis=0)
    covariance = centered.T @ centered / n
    already = (
        np.abs(covariance - np.eye(d)).max() < _WHITE_TOL
        and np.abs(X.mean(axis=0)).max() < _WHITE_TOL
    )
    if already:
        out = X.copy()
    else:
        u, s, _ = np.linalg.svd(centered, full_matrices=False)
        if s[-1] <= _RANK_TOL * s[0]:
            raise NumericError("latent matrix is numerically rank deficient")
        out = np.sqrt(n) * u
    anchor = np.argmax(np.abs(out), axis=0)
    signs = np.sign(out[anchor, np.arange(d)])
    signs[signs == 0] = 1.0
    return out * signs
