"""Seeded Lloyd runs on the disk mixture; reports every descent-inequality violation.

Prints one summary row per run and exits nonzero if any inequality fails.
"""

import argparse
import csv
import sys

from sdquant.density import fig1_mixture, sample_points
from sdquant.lloyd import LloydOptions, run_optimal, run_uniform


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--sizes", type=int, nargs="+", default=[3, 10, 20])
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--optimal-iters", type=int, default=250)
    p.add_argument("--uniform-iters", type=int, default=10)
    p.add_argument("--slack", type=float, default=1e-10)
    p.add_argument("--first-seed", type=int, default=100)
    a = p.parse_args(argv)
    d = fig1_mixture(a.resolution)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["seed", "N", "variant", "iterations", "final_loss", "min_cell_mass", "violations"])
    total = 0
    for r in range(a.runs):
        seed = a.first_seed + r
        N = a.sizes[r % len(a.sizes)]
        Y0 = sample_points(d, N, seed=seed)
        for name, run, iters in (("optimal", run_optimal, a.optimal_iters), ("uniform", run_uniform, a.uniform_iters)):
            _, tr = run(d, Y0, LloydOptions(max_iter=iters))
            bad = tr.violations(a.slack)
            total += len(bad)
            out.writerow([seed, N, name, tr.iterations, repr(tr.final_loss), repr(tr.ell_hat), len(bad)])
            for v in bad:
                print(f"  {name} seed {seed}: {v}", file=sys.stderr)
    print(f"total violations: {total}", file=sys.stderr)
    return 0 if total == 0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
