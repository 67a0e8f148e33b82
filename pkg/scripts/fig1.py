"""Two-component mixture on the unit disk, N points, optimal vs uniform Lloyd.

Writes traces, results and SVG renders for both variants into --out-dir.
"""

import argparse
from pathlib import Path

from sdquant.cli import main


def run(out_dir: Path, n: int, seed: int, resolution: int, optimal_iters: int, uniform_iters: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    base = ["quantize", "--density", "fig1", "--resolution", str(resolution), "--n", str(n), "--seed", str(seed),
            "--step-tol", "0"]
    status = 0
    for solver, iters in (("optimal", optimal_iters), ("uniform", uniform_iters)):
        stem = out_dir / solver
        rc = main(base + ["--solver", solver, "--max-iter", str(iters), "--out", f"{stem}.json",
                          "--trace", f"{stem}.csv", "--render", f"{stem}.svg"])
        print(f"{solver:8s} iterations={iters:4d} exit={rc} -> {stem}.svg")
        status = max(status, rc)
    return status


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", type=Path, default=Path("fig1_out"))
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--optimal-iters", type=int, default=250)
    p.add_argument("--uniform-iters", type=int, default=5)
    a = p.parse_args()
    raise SystemExit(run(a.out_dir, a.n, a.seed, a.resolution, a.optimal_iters, a.uniform_iters))
