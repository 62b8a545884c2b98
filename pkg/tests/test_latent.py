"""Latent-coordinate utilities: PCA start, budgeted ascent, standardization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflvm.exceptions import ConfigError, NumericError, ShapeError
from rflvm.latent import (
    OptimizerBudget,
    gradient_ascent,
    map_update_x,
    pca_initialize,
    procrustes_rotation,
    standardize_x,
)


# ---------------------------------------------------------------------------
# standardization


def test_standardize_whitens_second_moment():
    rng = np.random.default_rng(120)
    X = rng.standard_normal((50, 3)) @ np.diag([4.0, 1.0, 0.2]) + 1.0
    out = standardize_x(X)
    np.testing.assert_allclose(out.T @ out / 50, np.eye(3), atol=1e-10)


def test_standardize_idempotent():
    rng = np.random.default_rng(121)
    X = rng.standard_normal((40, 2)) * np.array([3.0, 0.5])
    once = standardize_x(X)
    twice = standardize_x(once)
    np.testing.assert_allclose(once, twice, atol=1e-10)


def test_standardize_invariant_to_rotation_and_scale():
    # Any right-rotation or positive rescaling of X changes only the SVD's
    # right factor, so the standardized output is unchanged.
    rng = np.random.default_rng(122)
    X = rng.standard_normal((30, 2)) @ np.diag([2.0, 0.7])
    theta = 0.81
    rot = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    base = standardize_x(X)
    np.testing.assert_allclose(standardize_x(X @ rot), base, atol=1e-9)
    np.testing.assert_allclose(standardize_x(3.5 * X), base, atol=1e-9)


def test_standardize_orders_columns_by_spread():
    rng = np.random.default_rng(123)
    t = rng.standard_normal(200)
    # nearly one-dimensional cloud along (1, 1), plus a weak second direction
    X = np.column_stack([t + 0.05 * rng.standard_normal(200), t])
    out = standardize_x(X)
    # first output column must carry the dominant direction: correlate
    corr = abs(np.corrcoef(out[:, 0], t)[0, 1])
    assert corr > 0.99


def test_standardize_sign_convention():
    rng = np.random.default_rng(124)
    X = rng.standard_normal((25, 2))
    out = standardize_x(X)
    for d in range(2):
        assert out[np.argmax(np.abs(out[:, d])), d] > 0


def test_standardize_rejects_rank_deficient():
    X = np.ones((10, 2))
    with pytest.raises(NumericError):
        standardize_x(X)


def test_standardize_rejects_wide_matrices():
    with pytest.raises(ShapeError):
        standardize_x(np.ones((2, 5)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(5, 60), d=st.integers(1, 4))
def test_standardize_always_white(seed, n, d):
    if d >= n:
        return
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) @ (
        np.eye(d) + 0.5 * rng.standard_normal((d, d))
    )
    try:
        out = standardize_x(X)
    except NumericError:
        return  # randomly rank-deficient draw: rejection is the contract
    np.testing.assert_allclose(out.T @ out / n, np.eye(d), atol=1e-8)


# ---------------------------------------------------------------------------
# PCA initialization


def test_pca_matches_svd_scores():
    rng = np.random.default_rng(130)
    Y = rng.standard_normal((20, 6)) @ np.diag([5, 3, 1, 1, 1, 1.0])
    out = pca_initialize(Y, 2)
    centered = Y - Y.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    scores = u[:, :2] * s[:2]
    scores = scores / scores.std(axis=0)
    # same up to per-column sign
    for d in range(2):
        agree = np.allclose(out[:, d], scores[:, d], atol=1e-8)
        flipped = np.allclose(out[:, d], -scores[:, d], atol=1e-8)
        assert agree or flipped


def test_pca_output_is_unit_variance():
    rng = np.random.default_rng(131)
    Y = rng.standard_normal((30, 8)) * 7.0 + 3.0
    out = pca_initialize(Y, 3)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-10)
    assert out.shape == (30, 3)


def test_pca_masked_cells_carry_no_information():
    # Changing the value under a masked cell must not change the result.
    rng = np.random.default_rng(132)
    Y = rng.standard_normal((15, 5))
    mask = np.zeros((15, 5), dtype=bool)
    mask[3, 1] = mask[7, 4] = True
    base = pca_initialize(Y, 2, mask=mask)
    Y2 = Y.copy()
    Y2[3, 1] = 1e6
    Y2[7, 4] = -4e4
    np.testing.assert_allclose(pca_initialize(Y2, 2, mask=mask), base, atol=1e-10)


def test_pca_validates_dimensions():
    Y = np.random.default_rng(133).standard_normal((10, 4))
    with pytest.raises(ConfigError):
        pca_initialize(Y, 0)
    with pytest.raises(ConfigError):
        pca_initialize(Y, 4)
    with pytest.raises(ShapeError):
        pca_initialize(Y, 2, mask=np.zeros((3, 3), dtype=bool))


def test_pca_rejects_degenerate_component():
    Y = np.zeros((12, 4))
    Y[:, 0] = np.arange(12.0)
    with pytest.raises(NumericError):
        pca_initialize(Y, 2)  # second component has no variance


# ---------------------------------------------------------------------------
# gradient ascent


def _quadratic(target):
    def vg(x):
        d = x - target
        return -float((d**2).sum()), -2.0 * d

    return vg


def test_ascent_converges_on_quadratic():
    target = np.array([[1.0, -2.0], [0.5, 3.0]])
    budget = OptimizerBudget(max_steps=500, step0=0.2, tol=1e-10)
    x, value = gradient_ascent(np.zeros((2, 2)), _quadratic(target), budget)
    np.testing.assert_allclose(x, target, atol=1e-6)
    assert value > -1e-10


def test_ascent_is_monotone():
    rng = np.random.default_rng(140)
    target = rng.standard_normal((3, 2))
    values = []

    def vg(x):
        d = x - target
        v = -float((d**2).sum())
        values.append(v)
        return v, -2.0 * d

    gradient_ascent(rng.standard_normal((3, 2)), vg, OptimizerBudget(max_steps=30))
    accepted = [values[0]]
    for v in values[1:]:
        if v >= accepted[-1]:
            accepted.append(v)
    # the final accepted value can never be below the start
    assert accepted[-1] >= values[0]


def test_ascent_respects_step_budget():
    calls = []

    def vg(x):
        calls.append(1)
        return -float((x**2).sum()), -2.0 * x

    budget = OptimizerBudget(max_steps=5, step0=1e-3, tol=0.0, max_halvings=2)
    gradient_ascent(np.ones(3), vg, budget)
    # one initial call plus at most max_steps * max_halvings evaluations
    assert len(calls) <= 1 + 5 * 2


def test_ascent_survives_nonfinite_candidates():
    # A cliff beyond x = 2: candidates there are rejected, not fatal.
    def vg(x):
        if np.any(x > 2.0):
            return np.nan, np.zeros_like(x)
        return float(x.sum()), np.ones_like(x)

    budget = OptimizerBudget(max_steps=50, step0=10.0, tol=0.0)
    x, value = gradient_ascent(np.zeros(2), vg, budget)
    assert np.all(x <= 2.0)
    assert np.isfinite(value)


def test_ascent_rejects_nonfinite_start():
    with pytest.raises(NumericError):
        gradient_ascent(
            np.array([np.inf]),
            lambda x: (float(x.sum()), np.ones_like(x)),
            OptimizerBudget(),
        )


def test_map_update_alias():
    target = np.zeros((2, 2))
    x, _ = map_update_x(
        np.full((2, 2), 0.3), _quadratic(target), OptimizerBudget(max_steps=200, step0=0.3)
    )
    np.testing.assert_allclose(x, target, atol=1e-5)


def test_budget_validation():
    with pytest.raises(ConfigError):
        OptimizerBudget(max_steps=0)
    with pytest.raises(ConfigError):
        OptimizerBudget(step0=0.0)


def _random_orthogonal(d, rng):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


@given(seed=st.integers(0, 10_000), d=st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_procrustes_recovers_planted_rotation(seed, d):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((12, d))
    q = _random_orthogonal(d, rng)
    r = procrustes_rotation(x @ q, x)
    np.testing.assert_allclose(r, q.T, atol=1e-10)
    np.testing.assert_allclose(r @ r.T, np.eye(d), atol=1e-12)


def test_procrustes_handles_reflections():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((20, 2))
    flip = np.diag([1.0, -1.0])
    r = procrustes_rotation(x @ flip, x)
    np.testing.assert_allclose(x @ flip @ r, x, atol=1e-12)


def test_procrustes_never_worse_than_identity():
    rng = np.random.default_rng(4)
    for _ in range(25):
        a = rng.standard_normal((15, 3))
        b = rng.standard_normal((15, 3))
        aligned = np.linalg.norm(a @ procrustes_rotation(a, b) - b)
        assert aligned <= np.linalg.norm(a - b) + 1e-12


def test_procrustes_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        procrustes_rotation(np.zeros((4, 2)), np.zeros((5, 2)))
