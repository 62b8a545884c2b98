"""Recovery and predictive metrics.

Latent estimates are only identified up to an affine map, so latent-space
accuracy is the R^2 of the best affine projection onto the ground truth.
Held-out fit is the mean squared error over masked cells. Label structure is
scored by cross-validated nearest-neighbor accuracy with deterministic tie
breaking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError


@dataclass
class EvalReport:
    """One metric's outcome: central value, spread, and replicate values."""

    metric: str
    mean: float
    standard_error: float
    values: list
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "metric": self.metric,
            "mean": self.mean,
            "standard_error": self.standard_error,
            "values": list(self.values),
            "details": self.details,
        }


def affine_align_r2(x_true, x_hat):
    """R^2 of the best affine projection of x_hat onto x_true.

    Fits x_true ~ [x_hat, 1] A by least squares and scores the fraction of
    variance explained. Returns (A, r2, rank_deficient); a rank-deficient
    design falls back to the minimum-norm solution and flags it.
    """
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.ndim != 2 or x_hat.ndim != 2 or x_true.shape[0] != x_hat.shape[0]:
        raise ShapeError("latent matrices must share their row count")
    n = x_true.shape[0]
    design = np.column_stack([x_hat, np.ones(n)])
    coef, _, rank, _ = np.linalg.lstsq(design, x_true, rcond=None)
    rank_deficient = rank < design.shape[1]
    resid = x_true - design @ coef
    centered = x_true - x_true.mean(axis=0)
    denom = float((centered**2).sum())
    if denom <= 0:
        raise ConfigError("ground-truth latent matrix is constant")
    r2 = 1.0 - float((resid**2).sum()) / denom
    return coef, r2, rank_deficient


def heldout_mse(y_true, y_pred, mask):
    """Mean squared error over the held-out (mask True) cells."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if y_true.shape != y_pred.shape or mask.shape != y_true.shape:
        raise ShapeError("prediction, truth, and mask shapes must agree")
    if not mask.any():
        raise ConfigError("mask holds out no entries; nothing to score")
    diff = y_true[mask] - y_pred[mask]
    return float(np.mean(diff**2))


def stratified_folds(labels, n_folds, rng):
    """Class-stratified fold labels (0..n_folds-1), one per row."""
    labels = np.asarray(labels)
    if n_folds < 2:
        raise ConfigError("need at least two folds")
    assignment = np.empty(labels.shape[0], dtype=int)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < n_folds:
            raise ConfigError(
                f"class {cls!r} has {idx.size} rows; needs at least {n_folds}"
            )
        perm = rng.permutation(idx)
        assignment[perm] = np.arange(perm.size) % n_folds
    return assignment


def _knn_predict(train_x, train_y, test_x, k):
    """K-nearest-neighbor labels; ties resolve to the lowest training index."""
    d2 = (
        (test_x**2).sum(axis=1)[:, None]
        + (train_x**2).sum(axis=1)[None, :]
        - 2.0 * test_x @ train_x.T
    )
    if k == 1:
        # argmin takes the first minimum, i.e. the smallest training index
        return train_y[np.argmin(d2, axis=1)]
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    out = np.empty(test_x.shape[0], dtype=train_y.dtype)
    for i in range(test_x.shape[0]):
        votes = train_y[order[i]]
        classes, counts = np.unique(votes, return_counts=True)
        winners = classes[counts == counts.max()]
        if winners.size == 1:
            out[i] = winners[0]
        else:
            # break vote ties by the nearest neighbor among tied classes
            for idx in order[i]:
                if train_y[idx] in winners:
                    out[i] = train_y[idx]
                    break
    return out


def knn_cv_accuracy(x_hat, labels, rng, n_folds=5, n_neighbors=1, repeats=5):
    """Repeated stratified cross-validated KNN accuracy on the latent space.

    Each repeat redraws the folds; its accuracy pools the out-of-fold
    predictions. Reports the mean and the standard error over repeats.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    labels = np.asarray(labels)
    if x_hat.ndim != 2 or labels.shape != (x_hat.shape[0],):
        raise ShapeError("need (N, D) coordinates and N labels")
    if n_neighbors < 1 or repeats < 1:
        raise ConfigError("n_neighbors and repeats must be >= 1")
    per_repeat = []
    for _ in range(repeats):
        fold_of = stratified_folds(labels, n_folds, rng)
        correct = 0
        for fold in range(n_folds):
            test = fold_of == fold
            train = ~test
            train_idx = np.flatnonzero(train)  # ascending, for tie breaking
            pred = _knn_predict(
                x_hat[train_idx], labels[train_idx], x_hat[test], n_neighbors
            )
            correct += int((pred == labels[test]).sum())
        per_repeat.append(correct / labels.shape[0])
    values = np.asarray(per_repeat)
    se = float(values.std(ddof=1) / np.sqrt(repeats)) if repeats > 1 else 0.0
    return EvalReport(
        metric="knn_accuracy",
        mean=float(values.mean()),
        standard_error=se,
        values=[float(v) for v in values],
        details={"folds": n_folds, "neighbors": n_neighbors, "repeats": repeats},
    )
