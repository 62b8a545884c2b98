"""Polya-Gamma random variates.

PG(b, c) is the infinite weighted sum of independent Gamma(b, 1) variates

    omega = (1 / (2 pi^2)) * sum_k g_k / ((k - 1/2)^2 + c^2 / (4 pi^2)).

Draws here truncate the sum at ``SERIES_TERMS`` terms and add the exact mean
of the discarded tail, which keeps the first moment unbiased while the
remaining tail variance is negligible at this depth. For large shape
parameters the distribution is effectively Gaussian and a moment-matched
normal draw is used instead.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError

SERIES_TERMS = 200
NORMAL_APPROX_MIN_SHAPE = 170.0
# cap on elements * terms drawn at once, to bound memory
_CHUNK_BUDGET = 4_000_000


def _validate(b, c):
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(b)) or not np.all(np.isfinite(c)):
        raise ConfigError("PG parameters must be finite")
    if np.any(b <= 0):
        raise ConfigError("PG shape parameter b must be positive")
    return b, c


def pg_mean(b, c):
    """E[PG(b, c)] = b/4 at c = 0, else (b / (2c)) tanh(c / 2)."""
    b, c = _validate(b, c)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        general = (b / (2.0 * c)) * np.tanh(c / 2.0)
    return np.where(np.abs(c) < 1e-8, b / 4.0, general)


def pg_var(b, c):
    """Var[PG(b, c)], from the series term variances."""
    b, c = _validate(b, c)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        general = b * (2.0 * np.tanh(c / 2.0) - c / np.cosh(c / 2.0) ** 2) / (
            4.0 * c**3
        )
    return np.where(np.abs(c) < 1e-4, b / 24.0, general)


def _series_draw(b, c, rng):
    """Truncated-series draws for 1-D parameter vectors."""
    n = b.size
    out = np.empty(n)
    k = np.arange(1, SERIES_TERMS + 1)
    chunk = max(1, _CHUNK_BUDGET // SERIES_TERMS)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        bb = b[sl]
        cc = c[sl]
        denom = (k - 0.5) ** 2 + (cc[:, None] / (2.0 * np.pi)) ** 2
        gammas = rng.standard_gamma(bb[:, None], size=(bb.size, SERIES_TERMS))
        partial = (gammas / denom).sum(axis=1) / (2.0 * np.pi**2)
        truncated_mean = (bb[:, None] / denom).sum(axis=1) / (2.0 * np.pi**2)
        tail_mean = pg_mean(bb, cc) - truncated_mean
        out[sl] = partial + tail_mean
    return out


def sample_pg(b, c, rng):
    """Draw PG(b, c) variates, elementwise over broadcast parameters.

    Shapes up to ``NORMAL_APPROX_MIN_SHAPE`` use the truncated series; larger
    shapes use a normal approximation with the exact mean and variance. All
    draws are strictly positive.
    """
    b, c = _validate(b, c)
    b, c = np.broadcast_arrays(b, c)
    shape = b.shape
    b = np.ravel(b).astype(float)
    c = np.ravel(c).astype(float)
    out = np.empty(b.size)
    small = b <= NORMAL_APPROX_MIN_SHAPE
    if np.any(small):
        out[small] = _series_draw(b[small], c[small], rng)
    if np.any(~small):
        bl, cl = b[~small], c[~small]
        mu = pg_mean(bl, cl)
        sd = np.sqrt(pg_var(bl, cl))
        draws = mu + sd * rng.standard_normal(bl.size)
        out[~small] = np.maximum(draws, np.finfo(float).tiny)
    return out.reshape(shape) if shape else float(out[0])
