#!/usr/bin/env python3
"""Side-by-side interval methods on the univariate families.

Usage:
    python scripts/univariate_suite.py --seed 7 --sims 500
"""
from __future__ import annotations

import argparse
import sys

from sgdinfer.experiments import GeneratorKind, univariate_comparison

FAMILIES = (GeneratorKind.NORMAL_MEAN, GeneratorKind.EXPONENTIAL_DATA,
            GeneratorKind.POISSON_DATA)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sims", type=int, default=500)
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--level", type=float, default=0.95)
    ap.add_argument("--replicates", type=int, default=500)
    ap.add_argument("--parallel", type=int, default=1)
    args = ap.parse_args(argv)

    print(f"{'family':>18} {'method':>22} {'coverage':>9} {'width':>8} {'ops':>13}")
    for kind in FAMILIES:
        reports = univariate_comparison(
            kind, num_sims=args.sims, level=args.level, master_seed=args.seed,
            parallel=args.parallel, replicates=args.replicates,
        )
        for rep in reports:
            print(f"{kind.value:>18} {rep.method:>22} {rep.coverage:>9.3f} "
                  f"{rep.avg_width:>8.3f} {rep.operation_count:>13d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
