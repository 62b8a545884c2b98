"""Random Fourier feature maps.

A frequency matrix ``W`` holds M/2 spectral frequencies (one per row). Each
frequency contributes an interleaved (sin, cos) pair of columns, so the
feature matrix has M columns and every row has unit Euclidean norm. Inner
products of feature rows approximate a shift-invariant kernel whose spectral
density is the sampling distribution of the rows of ``W``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import CovarianceError, ShapeError


def _as_matrix(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ShapeError(f"{name} must be non-empty, got shape {A.shape}")
    return A


def feature_map(X, W):
    """Map points ``X`` (N x D) through frequencies ``W`` (M/2 x D) to N x M.

    Column 2m is sqrt(2/M)*sin(w_m . x), column 2m+1 is sqrt(2/M)*cos(w_m . x).
    """
    X = _as_matrix(X, "X")
    W = _as_matrix(W, "W")
    if X.shape[1] != W.shape[1]:
        raise ShapeError(
            f"X has dimension {X.shape[1]} but frequencies have {W.shape[1]}"
        )
    n = X.shape[0]
    half_m = W.shape[0]
    m = 2 * half_m
    proj = X @ W.T
    phi = np.empty((n, m))
    scale = np.sqrt(2.0 / m)
    phi[:, 0::2] = scale * np.sin(proj)
    phi[:, 1::2] = scale * np.cos(proj)
    return phi


def rephase_coefficients(beta, W, shift):
    """Rotate coefficient (sin, cos) row pairs to absorb a latent translation.

    ``feature_map(X - shift, W) @ out`` equals ``feature_map(X, W) @ beta``
    exactly: translating every input point only advances the phase of each
    frequency, which is a rotation within that frequency's column pair.
    """
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(W, dtype=float) @ np.asarray(shift, dtype=float)
    cos_t = np.cos(theta)[:, None]
    sin_t = np.sin(theta)[:, None]
    out = np.empty_like(beta)
    out[0::2] = cos_t * beta[0::2] - sin_t * beta[1::2]
    out[1::2] = sin_t * beta[0::2] + cos_t * beta[1::2]
    return out


def approximate_kernel(phi_a, phi_b):
    """Kernel estimate between the point sets behind two feature matrices."""
    phi_a = _as_matrix(phi_a, "phi_a")
    phi_b = _as_matrix(phi_b, "phi_b")
    if phi_a.shape[1] != phi_b.shape[1]:
        raise ShapeError(
            "feature matrices disagree on M: "
            f"{phi_a.shape[1]} vs {phi_b.shape[1]}"
        )
    return phi_a @ phi_b.T


def sample_frequencies(z, means, covs, rng):
    """Draw a frequency matrix given mixture assignments and components.

    Row m is a Gaussian draw with the mean/covariance of component ``z[m]``.
    Rows are drawn in index order, so the result is reproducible for a given
    generator state.
    """
    z = np.asarray(z)
    if z.ndim != 1 or z.size == 0:
        raise ShapeError(f"z must be a non-empty vector, got shape {z.shape}")
    n_comp = len(means)
    if len(covs) != n_comp:
        raise ShapeError("means and covs must have the same length")
    if z.min() < 0 or z.max() >= n_comp:
        raise ShapeError("assignment labels out of range")
    d = np.asarray(means[0]).shape[0]
    chols = []
    for k in range(n_comp):
        cov = np.asarray(covs[k], dtype=float)
        try:
            chols.append(np.linalg.cholesky(cov))
        except np.linalg.LinAlgError:
            raise CovarianceError(
                f"component {k} covariance is not positive definite"
            ) from None
    w = np.empty((z.size, d))
    for m, k in enumerate(z):
        w[m] = np.asarray(means[k], dtype=float) + chols[k] @ rng.standard_normal(d)
    return w
