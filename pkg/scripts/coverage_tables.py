#!/usr/bin/env python3
"""Coverage/width tables for the multivariate experiments.

Runs one interval method over an (eta, t) grid of fresh synthetic
datasets and prints a cell table like the reference studies. Each cell
is an independent Monte Carlo study at the shared master seed, so the
table is reproducible run to run.

Usage:
    python scripts/coverage_tables.py --seed 7
    python scripts/coverage_tables.py --kind logistic_exp2 --method bootstrap --sims 200
    python scripts/coverage_tables.py --etas 0.1 0.02 --ts 500 2500 --csv table.csv
"""
from __future__ import annotations

import argparse
import csv
import sys

from sgdinfer.baselines import BootstrapConfig
from sgdinfer.experiments import (
    BootstrapMethod,
    GeneratorKind,
    GeneratorSpec,
    NormalApproxMethod,
    SgdInferenceMethod,
    coverage_simulation,
    default_burn_in,
)
from sgdinfer.inference import SgdConfig
from sgdinfer.models import BatchSpec

MULTIVARIATE = ("linear_exp1", "linear_exp2", "logistic_exp1", "logistic_exp2")


def build_method(name: str, eta: float, t: int, args: argparse.Namespace):
    if name == "sgd":
        cfg = SgdConfig(
            eta=eta, segment_len=t, discard=args.discard,
            burn_in=args.burn_in if args.burn_in is not None else default_burn_in(eta),
            segments=args.segments, batch=BatchSpec(size=args.batch),
        )
        return SgdInferenceMethod(config=cfg)
    if name == "bootstrap":
        return BootstrapMethod(config=BootstrapConfig(replicates=args.replicates))
    return NormalApproxMethod(source=name.split("_", 1)[1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=MULTIVARIATE, default="linear_exp1")
    ap.add_argument("--method", default="sgd",
                    choices=("sgd", "bootstrap", "normal_sandwich", "normal_fisher"))
    ap.add_argument("--etas", type=float, nargs="+", default=[0.1, 0.02, 0.008])
    ap.add_argument("--ts", type=int, nargs="+", default=[100, 500, 2500])
    ap.add_argument("--sims", type=int, default=500)
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--level", type=float, default=0.95)
    ap.add_argument("--segments", type=int, default=200)
    ap.add_argument("--discard", type=int, default=100)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--burn-in", type=int, default=None,
                    help="override the ceil(10/eta) heuristic")
    ap.add_argument("--replicates", type=int, default=200,
                    help="bootstrap refits per dataset")
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--csv", default=None, help="also write cells to this file")
    args = ap.parse_args(argv)

    spec = GeneratorSpec(GeneratorKind(args.kind))
    flat = "bootstrap" in args.method or args.method.startswith("normal")
    rows = []
    print(f"{args.kind} / {args.method}, {args.sims} sims per cell, seed {args.seed}")
    print(f"{'eta':>8} {'t':>6} {'coverage':>9} {'width':>8} {'ops':>14} {'sec':>7}")
    for eta in args.etas:
        for t in args.ts:
            rep = coverage_simulation(
                spec, build_method(args.method, eta, t, args), args.sims,
                level=args.level, master_seed=args.seed, parallel=args.parallel,
            )
            rows.append((eta, t, rep.coverage, rep.avg_width,
                         rep.operation_count, rep.runtime))
            print(f"{eta:>8g} {t:>6d} {rep.coverage:>9.3f} {rep.avg_width:>8.3f} "
                  f"{rep.operation_count:>14d} {rep.runtime:>7.1f}")
            if flat:
                break
        if flat and len(args.etas) > 1:
            print("(method ignores eta/t; single row shown)")
            break

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eta", "t", "coverage", "avg_width", "operations", "runtime"])
            writer.writerows(rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
