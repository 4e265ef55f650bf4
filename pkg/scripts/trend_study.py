#!/usr/bin/env python3
"""Segment-average covariance error across an (eta, t) grid.

For a fixed mean-estimation dataset, measures the spectral-norm error
of t * Cov(segment average) against the plug-in limit covariance at
every grid cell, then reports the diagonal trend (largest eta with
smallest t down to smallest eta with largest t). Error bars on each
cell scale like 1/sqrt(runs), so trends need a few thousand runs per
cell before they mean anything.

Usage:
    python scripts/trend_study.py --seed 7
    python scripts/trend_study.py --etas 0.4 0.2 0.1 --ts 250 500 1000 --runs 2000
"""
from __future__ import annotations

import argparse
import csv
import sys

from sgdinfer.core import RngStream
from sgdinfer.experiments import GeneratorKind, GeneratorSpec, generate, covariance_error_trend


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--etas", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    ap.add_argument("--ts", type=int, nargs="+", default=[250, 500, 1000])
    ap.add_argument("--runs", type=int, default=2000)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--p", type=int, default=5)
    ap.add_argument("--batch", type=int, default=1)
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)

    spec = GeneratorSpec(GeneratorKind.NORMAL_MEAN, n=args.n, p=args.p)
    data, _ = generate(spec, RngStream(args.seed, (0,)))
    result = covariance_error_trend(
        args.etas, args.ts, data, runs_per_cell=args.runs,
        master_seed=args.seed, batch_size=args.batch,
    )

    header = "".join(f" t={t:<10d}" for t in result.ts)
    print(f"spectral errors, {args.runs} runs per cell, seed {args.seed}")
    print(f"{'eta':>8}{header}")
    for i, eta in enumerate(result.etas):
        cells = "".join(f" {result.errors[i, j]:<12.5f}" for j in range(len(result.ts)))
        print(f"{eta:>8g}{cells}")

    k = min(len(result.etas), len(result.ts))
    diag = [float(result.errors[i, i]) for i in range(k)]
    print("diagonal:", " -> ".join(f"{v:.5f}" for v in diag),
          "(non-increasing)" if all(a >= b for a, b in zip(diag, diag[1:])) else "(mixed)")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eta", "t", "spectral_error"])
            for i, eta in enumerate(result.etas):
                for j, t in enumerate(result.ts):
                    writer.writerow([eta, t, float(result.errors[i, j])])
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
