"""Command-line interface: simulate, fit, evaluate, selfcheck.

Every command that writes to an output directory also echoes its resolved
settings there as ``config.txt`` (flat ``key=value`` lines, reusable via
``--config``). Exit codes: 0 success, 2 usage or configuration problems,
3 data problems, 4 numeric failures.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields as dataclass_fields

import numpy as np

from . import data as dio
from . import selfcheck
from .engine import RunConfig, posterior_predictive_mean, run_chains, trace_blocks
from .evaluation import affine_align_r2, heldout_mse, knn_cv_accuracy
from .exceptions import ConfigError, CovarianceError, DataError, NumericError, ShapeError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SIMULATE_KINDS = tuple(k for k in dio.KINDS if k != "multinomial")


# ---------------------------------------------------------------------------
# flat config files


def _parse_config_value(key, text):
    text = text.strip()
    if key == "disabled_stages":
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if key == "kind":
        return text
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_config_file(path):
    """Flat key=value settings; '#' starts a comment, dashes equal underscores."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for i, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {i}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        out[key] = _parse_config_value(key, value)
    return out


def _format_config_value(v):
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "none"
    return str(v)


def write_config_echo(path, settings):
    with open(path, "w") as fh:
        for key in sorted(settings):
            fh.write(f"{key}={_format_config_value(settings[key])}\n")


# Keys a config.txt echo may carry beyond the sampler settings themselves.
_ECHO_KEYS = ("command", "chains")


def _run_config_from(args, file_settings):
    """Build a RunConfig: defaults < config file < explicit flags."""
    valid = {f.name for f in dataclass_fields(RunConfig)}
    merged = {}
    for key, value in file_settings.items():
        if key in _ECHO_KEYS:
            continue
        if key not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    flag_map = dict(
        kind=args.kind,
        n_iterations=args.iterations,
        burn_in=args.burn_in,
        n_features=args.n_features,
        latent_dim=args.latent_dim,
        init_clusters=args.init_clusters,
        seed=args.seed,
        thinning=args.thinning,
    )
    for key, value in flag_map.items():
        if value is not None:
            merged[key] = value
    if "kind" not in merged:
        raise ConfigError("the observation kind is required (flag --kind or config)")
    return RunConfig(**merged)


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args):
    out = _ensure_outdir(args.out)
    rng = np.random.default_rng(args.seed)
    latent, t = dio.generate_s_curve(args.n_rows, rng, noise=args.curve_noise)
    data, truth = dio.sample_gp_observations(
        latent,
        args.n_cols,
        args.kind,
        rng,
        lengthscale=args.lengthscale,
        noise_scale=args.noise_scale,
        trials=args.trials,
        dispersion=args.dispersion,
    )
    integer = args.kind not in ("gaussian", "gaussian-marginalized")
    dio.write_matrix_csv(os.path.join(out, "y.csv"), data.Y, integer=integer)
    dio.write_matrix_csv(os.path.join(out, "x_true.csv"), truth.latent)
    dio.write_matrix_csv(os.path.join(out, "f_true.csv"), truth.functions)
    dio.write_matrix_csv(os.path.join(out, "t_true.csv"), t[:, None])
    if data.trials is not None:
        dio.write_matrix_csv(
            os.path.join(out, "trials.csv"), data.trials, integer=True
        )
    if args.holdout > 0:
        mask = dio.make_holdout_mask(data.Y.shape, args.holdout, rng)
        dio.write_matrix_csv(
            os.path.join(out, "mask.csv"), mask.astype(float), integer=True
        )
    write_config_echo(
        os.path.join(out, "config.txt"),
        dict(
            command="simulate",
            kind=args.kind,
            n_rows=args.n_rows,
            n_cols=args.n_cols,
            seed=args.seed,
            lengthscale=args.lengthscale,
            noise_scale=args.noise_scale,
            curve_noise=args.curve_noise,
            trials=args.trials,
            dispersion=args.dispersion,
            holdout=args.holdout,
        ),
    )
    print(f"wrote {args.kind} data ({args.n_rows} x {args.n_cols}) to {out}")
    return EXIT_OK


def _cmd_fit(args):
    out = _ensure_outdir(args.out)
    file_settings = read_config_file(args.config) if args.config else {}
    config = _run_config_from(args, file_settings)
    n_chains = args.chains
    if n_chains is None:
        n_chains = int(file_settings.get("chains", 1))
    trials = (
        dio.read_matrix_csv(args.trials) if args.trials is not None else None
    )
    mask = None
    if args.mask is not None:
        mask = dio.read_matrix_csv(args.mask).astype(bool)
    data_kind = (
        "gaussian" if config.kind == "gaussian-marginalized" else config.kind
    )
    data = dio.load_observations_csv(
        args.data, data_kind, label_column=args.label_column, trials=trials
    )
    if mask is not None or data.mask is not None:
        data = dio.ObservationMatrix(
            Y=data.Y, kind=data.kind, mask=mask, trials=data.trials, labels=data.labels
        )
    traces = run_chains(config, data, n_chains)

    for i, trace in enumerate(traces):
        blocks, columns = trace_blocks(trace)
        name = "trace.txt" if i == 0 else f"trace_chain{i}.txt"
        dio.write_trace(
            os.path.join(out, name), trace.config.to_dict(), blocks, columns
        )
    x_mean = np.mean([t.posterior_mean_x() for t in traces], axis=0)
    dio.write_matrix_csv(os.path.join(out, "x_mean.csv"), x_mean)
    y_pred = np.mean(
        [posterior_predictive_mean(t, data) for t in traces], axis=0
    )
    dio.write_matrix_csv(os.path.join(out, "y_pred.csv"), y_pred)

    echo = config.to_dict()
    echo["chains"] = n_chains
    write_config_echo(os.path.join(out, "config.txt"), echo)

    report = {
        "kind": config.kind,
        "n_rows": data.n_rows,
        "n_cols": data.n_cols,
        "n_features": config.n_features,
        "chains": n_chains,
        "records_per_chain": [t.n_records for t in traces],
        "runtime_seconds": [round(t.runtime_seconds, 3) for t in traces],
        "final_loglik": [float(t.diagnostics["loglik"][-1]) for t in traces],
        "mean_alpha": [float(np.mean(t.alpha_samples)) for t in traces],
        "mean_clusters": [
            float(t.diagnostics["n_clusters"].mean()) for t in traces
        ],
        "mh_accept_rate": [
            float(t.diagnostics["mh_accept_rate"].mean()) for t in traces
        ],
        "clamp_events": [int(t.diagnostics["clamp_events"].sum()) for t in traces],
    }
    if mask is not None:
        report["heldout_mse"] = heldout_mse(data.Y, y_pred, mask)
    dio.write_report(os.path.join(out, "fit_report.json"), report)
    print(
        f"fit {config.kind} model: {n_chains} chain(s), "
        f"{config.n_iterations} iterations; outputs in {out}"
    )
    return EXIT_OK


def _cmd_evaluate(args):
    report = {}
    rng = np.random.default_rng(args.seed)
    if args.x_est is not None and args.x_true is not None:
        x_true = dio.read_matrix_csv(args.x_true)
        x_est = dio.read_matrix_csv(args.x_est)
        _, r2, deficient = affine_align_r2(x_true, x_est)
        report["latent_r2"] = {"value": r2, "rank_deficient": bool(deficient)}
    if args.y is not None and args.y_pred is not None and args.mask is not None:
        y = dio.read_matrix_csv(args.y)
        y_pred = dio.read_matrix_csv(args.y_pred)
        mask = dio.read_matrix_csv(args.mask).astype(bool)
        report["heldout_mse"] = heldout_mse(y, y_pred, mask)
    if args.labels is not None and args.x_est is not None:
        labels = dio.read_labels(args.labels)
        x_est = dio.read_matrix_csv(args.x_est)
        knn = knn_cv_accuracy(
            x_est,
            labels,
            rng,
            n_folds=args.knn_folds,
            n_neighbors=args.knn_neighbors,
        )
        report["knn_accuracy"] = knn.to_dict()
    if not report:
        raise ConfigError(
            "nothing to evaluate: pass latent matrices, prediction files, or labels"
        )
    if args.out is not None:
        dio.write_report(args.out, report)
    for metric, value in report.items():
        print(f"{metric}: {value}")
    return EXIT_OK


def _cmd_selfcheck(args):
    results = selfcheck.run_all(fast=args.fast)
    width = max(len(r.module) for r in results)
    for r in results:
        tag = "ok  " if r.passed else "FAIL"
        print(f"{tag} [{r.module.ljust(width)}] {r.name}: {r.detail}")
    n_failed = sum(not r.passed for r in results)
    print(f"{len(results) - n_failed}/{len(results)} checks passed")
    return EXIT_OK if n_failed == 0 else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rflvm",
        description=(
            "Nonlinear dimension reduction for count, binary, and real-valued "
            "matrices with random sinusoidal features and a learned frequency mixture."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic data set")
    sim.add_argument("--kind", required=True, choices=SIMULATE_KINDS)
    sim.add_argument("--n-rows", type=int, default=200)
    sim.add_argument("--n-cols", type=int, default=50)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--lengthscale", type=float, default=1.0)
    sim.add_argument("--noise-scale", type=float, default=0.1)
    sim.add_argument("--curve-noise", type=float, default=0.05)
    sim.add_argument("--trials", type=int, default=10)
    sim.add_argument("--dispersion", type=float, default=2.0)
    sim.add_argument("--holdout", type=float, default=0.0)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="run the sampler on a CSV data matrix")
    fit.add_argument("--data", required=True)
    fit.add_argument("--kind", choices=dio.KINDS)
    fit.add_argument("--config", help="flat key=value settings file")
    fit.add_argument("--iterations", type=int)
    fit.add_argument("--burn-in", type=int)
    fit.add_argument("--n-features", type=int)
    fit.add_argument("--latent-dim", type=int)
    fit.add_argument("--init-clusters", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--thinning", type=int)
    fit.add_argument("--chains", type=int)
    fit.add_argument("--mask", help="CSV of 0/1 held-out indicators")
    fit.add_argument("--trials", help="CSV of binomial trial counts")
    fit.add_argument("--label-column", help="header column to use as row labels")
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=_cmd_fit)

    ev = sub.add_parser("evaluate", help="score a fit against ground truth")
    ev.add_argument("--x-true", help="CSV of true latent coordinates")
    ev.add_argument("--x-est", help="CSV of estimated latent coordinates")
    ev.add_argument("--y", help="CSV of observations")
    ev.add_argument("--y-pred", help="CSV of predicted means")
    ev.add_argument("--mask", help="CSV of 0/1 held-out indicators")
    ev.add_argument("--labels", help="text file of row labels")
    ev.add_argument("--knn-folds", type=int, default=5)
    ev.add_argument("--knn-neighbors", type=int, default=1)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", help="write the report as JSON here")
    ev.set_defaults(func=_cmd_evaluate)

    chk = sub.add_parser("selfcheck", help="run the built-in verification battery")
    chk.add_argument("--fast", action="store_true", help="smaller Monte Carlo sizes")
    chk.set_defaults(func=_cmd_selfcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, CovarianceError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
