"""Data types, synthetic generators, and file formats.

Observation kinds are validated here once so the samplers can assume clean
input. Synthetic data comes from a noisy S-shaped latent curve pushed
through exact Gaussian-process draws and a per-kind observation law. Files
are plain CSV for matrices, JSON for reports, and a one-line JSON header
followed by named CSV blocks for posterior traces; floats are serialized
with ``repr`` so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, DataError, NumericError, ShapeError

KINDS = (
    "gaussian",
    "gaussian-marginalized",
    "poisson",
    "bernoulli",
    "binomial",
    "negative-binomial",
    "multinomial",
)
COUNT_KINDS = ("poisson", "bernoulli", "binomial", "negative-binomial", "multinomial")

TRACE_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# core containers


@dataclass
class ObservationMatrix:
    """An N x J data matrix with its kind and optional mask/trials/labels."""

    Y: np.ndarray
    kind: str
    mask: Optional[np.ndarray] = None
    trials: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        # Zero columns is allowed (a prior-only run); zero rows is not.
        if self.Y.ndim != 2 or self.Y.shape[0] < 1:
            raise ShapeError(f"Y must be a matrix with rows, got {self.Y.shape}")
        if self.kind not in KINDS:
            raise ConfigError(
                f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}"
            )
        if not np.all(np.isfinite(self.Y)):
            raise DataError("Y contains non-finite entries")
        if self.kind in COUNT_KINDS:
            if np.any(self.Y < 0) or not np.array_equal(self.Y, np.round(self.Y)):
                raise DataError(f"{self.kind} data must be nonnegative integers")
        if self.kind == "bernoulli" and np.any(self.Y > 1):
            raise DataError("bernoulli data must be 0/1")
        if self.kind == "binomial":
            if self.trials is None:
                raise ConfigError("binomial data requires a trials matrix")
            self.trials = np.asarray(self.trials, dtype=float)
            if self.trials.shape != self.Y.shape:
                raise ShapeError("trials shape must match Y")
            if np.any(self.trials < 0) or not np.array_equal(
                self.trials, np.round(self.trials)
            ):
                raise DataError("trials must be nonnegative integers")
            if np.any(self.Y > self.trials):
                raise DataError("binomial counts exceed their trials")
        if self.kind == "multinomial" and self.Y.shape[1] < 2:
            raise ShapeError("multinomial data needs at least two columns")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.Y.shape:
                raise ShapeError("mask shape must match Y")
            if self.mask.all():
                raise DataError("mask holds out every entry")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.Y.shape[0],):
                raise ShapeError("labels must have one entry per row")

    @property
    def n_rows(self):
        return self.Y.shape[0]

    @property
    def n_cols(self):
        return self.Y.shape[1]


@dataclass
class SyntheticTruth:
    """Ground truth behind a synthetic data set."""

    latent: np.ndarray
    functions: np.ndarray
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# generators


def rbf_kernel(xa, xb, lengthscale=1.0):
    """Exact squared-exponential kernel exp(-||x - x'||^2 / (2 l^2))."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    if lengthscale <= 0:
        raise ConfigError("lengthscale must be positive")
    sq = (
        (xa**2).sum(axis=1)[:, None]
        + (xb**2).sum(axis=1)[None, :]
        - 2.0 * xa @ xb.T
    )
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * lengthscale**2))


def generate_s_curve(n_points, rng, noise=0.05):
    """Noisy S-shaped curve in the plane, standardized per column.

    Returns (X, t): X is n x 2 with zero column means and unit (1/N)
    variances; t is the curve parameter of each row.
    """
    if n_points < 3:
        raise ConfigError("need at least 3 points")
    if noise < 0:
        raise ConfigError("noise must be nonnegative")
    t = rng.uniform(-1.5 * np.pi, 1.5 * np.pi, size=n_points)
    pts = np.column_stack([np.sin(t), np.sign(t) * (np.cos(t) - 1.0)])
    pts = pts + noise * rng.standard_normal(pts.shape)
    pts -= pts.mean(axis=0)
    stds = pts.std(axis=0)
    if np.any(stds < 1e-12):
        raise NumericError("degenerate curve sample")
    return pts / stds, t


def _stable_link_input(f):
    """Center/scale each column to unit spread, then offset by one."""
    mean = f.mean(axis=0)
    sd = f.std(axis=0)
    if np.any(sd < 1e-12):
        raise NumericError("a sampled function column is constant; cannot scale")
    return (f - mean) / sd + 1.0


def sample_gp_observations(
    latent,
    n_cols,
    kind,
    rng,
    lengthscale=1.0,
    noise_scale=0.1,
    trials=10,
    dispersion=2.0,
):
    """Draw observation columns from exact GP functions of the latent points.

    Each column is f_j ~ N(0, K) with the squared-exponential kernel over the
    latent rows, pushed through the observation law of ``kind``. Returns
    (ObservationMatrix, SyntheticTruth).
    """
    latent = np.asarray(latent, dtype=float)
    if latent.ndim != 2:
        raise ShapeError("latent points must be a matrix")
    if n_cols < 1:
        raise ConfigError("need at least one column")
    if kind == "multinomial" or kind not in KINDS:
        raise DataError(f"no synthetic generator for kind {kind!r}")
    n = latent.shape[0]
    cov = rbf_kernel(latent, latent, lengthscale)
    chol = None
    jitter_used = None
    for jitter in (1e-6, 1e-4):
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(n))
            jitter_used = jitter
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise NumericError("GP covariance is not factorizable even with jitter")
    f = chol @ rng.standard_normal((n, n_cols))
    params = {
        "kind": kind,
        "lengthscale": float(lengthscale),
        "jitter": float(jitter_used),
    }
    trials_mat = None
    if kind in ("gaussian", "gaussian-marginalized"):
        sd = f.std(axis=0)
        sigma = noise_scale * sd
        y = f + sigma[None, :] * rng.standard_normal(f.shape)
        params["noise_scale"] = float(noise_scale)
    elif kind == "poisson":
        g = _stable_link_input(f)
        y = rng.poisson(np.exp(g)).astype(float)
    elif kind == "bernoulli":
        g = _stable_link_input(f)
        y = rng.binomial(1, expit(g)).astype(float)
    elif kind == "binomial":
        if trials < 1 or int(trials) != trials:
            raise ConfigError("trials must be a positive integer")
        g = _stable_link_input(f)
        trials_mat = np.full(f.shape, float(trials))
        y = rng.binomial(int(trials), expit(g)).astype(float)
        params["trials"] = int(trials)
    else:  # negative-binomial
        if dispersion <= 0:
            raise ConfigError("dispersion must be positive")
        g = _stable_link_input(f)
        y = rng.negative_binomial(dispersion, 1.0 - expit(g)).astype(float)
        params["dispersion"] = float(dispersion)
    data = ObservationMatrix(Y=y, kind=kind, trials=trials_mat)
    return data, SyntheticTruth(latent=latent.copy(), functions=f, params=params)


def make_holdout_mask(shape, fraction, rng):
    """Boolean mask holding out exactly floor(fraction * N * J) entries."""
    n, j_cols = shape
    if n < 1 or j_cols < 1:
        raise ShapeError("mask shape must be positive")
    if not 0.0 <= fraction < 1.0:
        raise ConfigError("holdout fraction must be in [0, 1)")
    total = n * j_cols
    n_hold = int(np.floor(fraction * total))
    mask = np.zeros(total, dtype=bool)
    if n_hold:
        mask[rng.choice(total, size=n_hold, replace=False)] = True
    return mask.reshape(n, j_cols)


# ---------------------------------------------------------------------------
# CSV


def _parse_cell(text, row_num, col_num, path):
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"{path}: row {row_num}, column {col_num}: not a number: {text!r}"
        ) from None


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def read_matrix_csv(path):
    """Read a headerless rectangular numeric CSV."""
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: file is empty")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(
                f"{path}: row {i + 1} has {len(row)} fields, expected {width}"
            )
        for j, cell in enumerate(row):
            out[i, j] = _parse_cell(cell.strip(), i + 1, j + 1, path)
    return out


def load_observations_csv(path, kind, label_column=None, trials=None):
    """Read observations from CSV, with optional header and label column.

    A header row is assumed when the first row has any non-numeric field.
    ``label_column`` names a header column to peel off as row labels. Count
    kinds are checked cell-by-cell; the first violation is reported with its
    file row and column.
    """
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = None
    first = [c.strip() for c in rows[0]]

    def _is_number(s):
        try:
            float(s)
            return True
        except ValueError:
            return False

    if not all(_is_number(c) for c in first):
        header = first
        body = rows[1:]
        offset = 2
    else:
        body = rows
        offset = 1
    if not body:
        raise DataError(f"{path}: no data rows")
    label_idx = None
    if label_column is not None:
        if header is None:
            raise DataError(f"{path}: label column requires a header row")
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r} in header")
        label_idx = header.index(label_column)
    width = len(body[0])
    labels = [] if label_idx is not None else None
    numeric_width = width - (1 if label_idx is not None else 0)
    if numeric_width < 1:
        raise DataError(f"{path}: no numeric columns")
    out = np.empty((len(body), numeric_width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise DataError(
                f"{path}: row {i + offset} has {len(row)} fields, expected {width}"
            )
        k = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                labels.append(cell.strip())
                continue
            value = _parse_cell(cell.strip(), i + offset, j + 1, path)
            if kind in COUNT_KINDS and (value < 0 or value != np.floor(value)):
                raise DataError(
                    f"{path}: row {i + offset}, column {j + 1}: "
                    f"{kind} data must be a nonnegative integer, got {cell.strip()!r}"
                )
            out[i, k] = value
            k += 1
    return ObservationMatrix(
        Y=out,
        kind=kind,
        trials=trials,
        labels=np.asarray(labels) if labels is not None else None,
    )


def _format_value(v, integer):
    if integer:
        return str(int(round(v)))
    return repr(float(v))


def write_matrix_csv(path, matrix, integer=False):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(_format_value(v, integer) for v in row))
            fh.write("\n")


def read_labels(path):
    with open(path) as fh:
        labels = [line.strip() for line in fh if line.strip()]
    if not labels:
        raise DataError(f"{path}: no labels found")
    return np.asarray(labels)


def write_labels(path, labels):
    with open(path, "w") as fh:
        for lab in labels:
            fh.write(f"{lab}\n")


# ---------------------------------------------------------------------------
# reports and traces


def write_report(path, report):
    """Serialize a report dict as one deterministic JSON document."""
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path):
    with open(path) as fh:
        return json.load(fh)


def write_trace(path, config, blocks, block_columns=None):
    """One JSON header line plus named CSV numeric blocks.

    ``blocks`` maps block name -> 2-D array; ``block_columns`` optionally
    maps block name -> column names recorded in the header.
    """
    block_columns = block_columns or {}
    directory = {}
    names = sorted(blocks)
    for name in names:
        arr = np.atleast_2d(np.asarray(blocks[name], dtype=float))
        entry = {"rows": int(arr.shape[0]), "cols": int(arr.shape[1])}
        if name in block_columns:
            entry["columns"] = list(block_columns[name])
        directory[name] = entry
    header = {
        "format_version": TRACE_FORMAT_VERSION,
        "kind": "trace",
        "config": config,
        "blocks": directory,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True))
        fh.write("\n")
        for name in names:
            arr = np.atleast_2d(np.asarray(blocks[name], dtype=float))
            fh.write(f"#block {name} {arr.shape[0]} {arr.shape[1]}\n")
            for row in arr:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")


def read_trace(path):
    """Inverse of ``write_trace``: returns (header dict, {name: array})."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad trace header: {exc}") from None
    if header.get("format_version") != TRACE_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported trace format version {header.get('format_version')!r}"
        )
    blocks = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if not line.startswith("#block "):
            raise DataError(f"{path}: line {i + 1}: expected a #block marker")
        try:
            _, name, rows_s, cols_s = line.split()
            rows, cols = int(rows_s), int(cols_s)
        except ValueError:
            raise DataError(f"{path}: line {i + 1}: malformed block marker") from None
        arr = np.empty((rows, cols))
        for r in range(rows):
            parts = lines[i + 1 + r].split(",")
            if len(parts) != cols:
                raise DataError(
                    f"{path}: line {i + 2 + r}: expected {cols} fields"
                )
            arr[r] = [
                _parse_cell(p, i + 2 + r, c + 1, path) for c, p in enumerate(parts)
            ]
        blocks[name] = arr
        i += 1 + rows
    return header, blocks
