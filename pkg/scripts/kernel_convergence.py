#!/usr/bin/env python3
"""How fast does the random-feature kernel estimate approach the exact RBF?

Draws S-curve point sets, compares feature-map inner products against the
closed-form kernel across feature counts, and prints a small table. With
--plot it also writes a log-log error curve (requires matplotlib).
"""

import argparse

import numpy as np

from rflvm.data import generate_s_curve, rbf_kernel
from rflvm.features import feature_map


def relative_error(points, m, rng, lengthscale):
    w = rng.standard_normal((m // 2, points.shape[1])) / lengthscale
    phi = feature_map(points, w)
    exact = rbf_kernel(points, points, lengthscale)
    return (
        np.linalg.norm(phi @ phi.T - exact) / np.linalg.norm(exact),
        np.abs(phi @ phi.T - exact).mean(),
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-points", type=int, default=200)
    parser.add_argument("--lengthscale", type=float, default=1.0)
    parser.add_argument("--n-seeds", type=int, default=10)
    parser.add_argument(
        "--sizes", default="10,20,50,100,200,500,1000",
        help="comma-separated feature counts",
    )
    parser.add_argument("--plot", help="write a PNG of the error curve here")
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    frob = np.empty((args.n_seeds, len(sizes)))
    entry = np.empty_like(frob)
    for s in range(args.n_seeds):
        rng = np.random.default_rng(s)
        points, _ = generate_s_curve(args.n_points, rng)
        for i, m in enumerate(sizes):
            frob[s, i], entry[s, i] = relative_error(
                points, m, rng, args.lengthscale
            )

    print(f"{'M':>6}  {'frobenius rel':>14}  {'mean abs entry':>14}")
    for i, m in enumerate(sizes):
        print(f"{m:>6}  {frob[:, i].mean():>14.4f}  {entry[:, i].mean():>14.4f}")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.loglog(sizes, frob.mean(axis=0), "o-", label="Frobenius relative")
        ax.loglog(sizes, entry.mean(axis=0), "s--", label="mean |entry|")
        ax.loglog(
            sizes, frob.mean(axis=0)[0] * np.sqrt(sizes[0] / np.asarray(sizes)),
            ":", color="gray", label="1/sqrt(M) guide",
        )
        ax.set_xlabel("number of features M")
        ax.set_ylabel("kernel approximation error")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        print(f"wrote {args.plot}")


if __name__ == "__main__":
    main()
