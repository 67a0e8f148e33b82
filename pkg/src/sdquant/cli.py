"""Command-line front end: ``sdq quantize`` and ``sdq verify``.

Exit codes: 0 success, 1 configuration error, 2 solver failure or failed
check, 3 input/output failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .cells import as_points, power_partition, tie_weights, voronoi_partition, write_label_pgm, write_region_stats_csv
from .cost import SQUARED_EUCLIDEAN
from .density import GridDensity, build_disk_mixture, build_uniform_box, fig1_mixture, load_pgm, sample_points
from .diagnostics import verify_suite
from .divergences import (
    EntropicConfig,
    MaxSlicedOptions,
    SlicedConfig,
    density_atoms,
    entropic_semidiscrete,
    max_sliced_discrete,
    max_sliced_semidiscrete,
    sliced_w2_discrete,
)
from .dual import SolverOptions, solve_dual
from .errors import ConvergenceError, DegenerateMeasureError, DiagonalError, EmptyCellError, PGMFormatError
from .io import render_svg, write_result_json, write_trace_csv
from .lloyd import LloydOptions, run_optimal, run_uniform

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
SOLVERS = ("optimal", "uniform", "entropic", "sliced", "max_sliced", "dual")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    density: object = None
    solver: str = "optimal"
    n: Optional[int] = None
    seed: int = 0
    points: Optional[list] = None
    target_points: Optional[list] = None
    resolution: Optional[list] = None
    max_iter: int = 10000
    step_tol: Optional[float] = None
    mass_tol: Optional[float] = None
    epsilon: Optional[float] = None
    directions: int = 1000
    iterations: int = 10
    trace: Optional[str] = None
    out: Optional[str] = None
    render: Optional[str] = None
    labels: Optional[str] = None
    cell_stats: Optional[str] = None
    fault_grad_scale: float = 1.0
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.density is None:
            raise ConfigError("no density given (use --density or a config file)")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if self.n is not None and self.n < 1:
            raise ConfigError("--n must be >= 1")
        if self.max_iter < 1:
            raise ConfigError("--max-iter must be >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("--epsilon must be > 0")
        if self.directions < 1:
            raise ConfigError("--directions must be >= 1")


def parse_points(text) -> list:
    """``"0.2,0.6"`` (1-D) or ``"x,y;x,y"``; lists pass through."""
    if isinstance(text, list):
        return text
    rows = [r for r in str(text).split(";") if r.strip()]
    try:
        vals = [[float(v) for v in r.split(",")] for r in rows]
    except ValueError as exc:
        raise ConfigError(f"cannot parse points {text!r}") from exc
    if len(vals) == 1:
        return vals[0]
    return vals


def _int_list(text):
    if text is None or isinstance(text, list):
        return text
    if isinstance(text, int):
        return [text]
    try:
        return [int(v) for v in str(text).split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse resolution {text!r}") from exc


def _resolution(cfg: RunConfig, dim: int, default):
    res = _int_list(cfg.resolution)
    if res is None:
        return default
    if len(res) == 1:
        res = res * dim
    if len(res) != dim or min(res) < 1:
        raise ConfigError(f"resolution must have {dim} positive entries")
    return res


def load_density(cfg: RunConfig) -> GridDensity:
    """Resolve the density source: ``uniform:lo..,hi..``, ``fig1``, ``*.pgm``, ``*.json`` or an inline mixture."""
    src = cfg.density
    if isinstance(src, dict):
        return _mixture(src, cfg)
    src = str(src)
    if src.startswith("uniform:"):
        try:
            vals = [float(v) for v in src[len("uniform:") :].split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad uniform box {src!r}") from exc
        if len(vals) not in (2, 4):
            raise ConfigError("uniform box takes lo,hi (1-D) or lo_x,lo_y,hi_x,hi_y (2-D)")
        k = len(vals) // 2
        res = _resolution(cfg, k, [1000] if k == 1 else [128, 128])
        try:
            return build_uniform_box(vals[:k], vals[k:], res)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if src == "fig1":
        res = _resolution(cfg, 2, [128, 128])
        return fig1_mixture(res)
    path = Path(src)
    if path.suffix.lower() == ".pgm":
        return load_pgm(path)
    if path.suffix.lower() == ".json":
        return _mixture(json.loads(path.read_text()), cfg)
    raise ConfigError(f"unrecognized density source {src!r}")


def _mixture(spec: dict, cfg: RunConfig) -> GridDensity:
    try:
        center = spec["center"]
        dim = len(np.atleast_1d(center))
        res = _resolution(cfg, dim, _int_list(spec.get("resolution", 128)))
        if len(res) == 1:
            res = res * dim
        return build_disk_mixture(center, spec["radius"], spec["components"], res, spec.get("window"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad mixture spec: {exc}") from exc


def initial_points(cfg: RunConfig, d: GridDensity) -> np.ndarray:
    if cfg.points is not None:
        Y = as_points(cfg.points, d.dim)
        if cfg.n is not None and cfg.n != len(Y):
            raise ConfigError(f"--n {cfg.n} disagrees with {len(Y)} explicit points")
        return Y
    return sample_points(d, cfg.n or 1, seed=cfg.seed)


def _partition_output(cfg, d, part):
    if cfg.labels:
        write_label_pgm(cfg.labels, part)
    if cfg.cell_stats:
        write_region_stats_csv(cfg.cell_stats, part)


def _lloyd(cfg: RunConfig, d: GridDensity, Y0):
    inner = SolverOptions(mass_tol=cfg.mass_tol)
    opts = LloydOptions(max_iter=cfg.max_iter, step_tol=cfg.step_tol, seed=cfg.seed, inner=inner)
    run = run_optimal if cfg.solver == "optimal" else run_uniform
    Y, tr = run(d, Y0, opts)
    if cfg.solver == "optimal":
        part = voronoi_partition(d, Y)
        weights = np.zeros(len(Y))
    else:
        weights = tr.final_weights.w
        part = power_partition(d, Y, weights)
    res = {
        "loss": tr.final_loss,
        "gradNorm": tr.final_grad_norm,
        "iterations": tr.iterations,
        "converged": tr.converged,
        "points": Y,
        "weights": weights,
        "masses": tr.final_masses,
        "minCellMass": tr.ell_hat,
        "outsideSupport": any(r.outside_support for r in tr.rows),
    }
    return res, tr, Y, part, tr.final_masses, EXIT_OK


def _target(cfg, d, Y):
    if cfg.target_points is not None:
        T = as_points(cfg.target_points, Y.shape[1])
        return T, None
    X, m = density_atoms(d)
    return X, m


def quantize(cfg: RunConfig) -> int:
    d = load_density(cfg)
    Y0 = initial_points(cfg, d)
    trace, part = None, None
    status = EXIT_OK
    if cfg.solver in ("optimal", "uniform"):
        result, trace, Y, part, masses, status = _lloyd(cfg, d, Y0)
    elif cfg.solver == "dual":
        rep = solve_dual(d, Y0, SQUARED_EUCLIDEAN, tie_weights(Y0), SolverOptions(mass_tol=cfg.mass_tol, max_iter=cfg.max_iter))
        Y, masses = Y0, rep.masses
        part = power_partition(d, Y0, rep.w)
        result = {
            "value": rep.value,
            "loss": 0.5 * rep.value,
            "weights": rep.w,
            "masses": rep.masses,
            "massResiduals": rep.mass_residuals,
            "iterations": rep.iterations,
            "converged": rep.converged,
            "points": Y0,
        }
        status = EXIT_OK if rep.converged else EXIT_SOLVER
    elif cfg.solver == "entropic":
        eps = cfg.epsilon if cfg.epsilon is not None else 0.01 * d.support_diameter() ** 2
        ent = entropic_semidiscrete(d, Y0, cfg=EntropicConfig(eps, cfg.max_iter), raise_on_failure=False)
        Y, masses = Y0, ent.soft_masses
        result = {
            "value": ent.value,
            "epsilon": eps,
            "weights": ent.w,
            "masses": ent.soft_masses,
            "iterations": ent.iterations,
            "converged": ent.converged,
            "gradNorm": ent.grad_norm,
            "flags": {"hardMinFallback": ent.hard_min_fallback, "potentialBoundExceeded": ent.potential_bound_exceeded},
            "points": Y0,
        }
        status = EXIT_OK if ent.converged else EXIT_SOLVER
    else:
        X, a = _target(cfg, d, Y0)
        b = tie_weights(Y0)
        Y, masses = Y0, b
        if cfg.solver == "sliced":
            sr = sliced_w2_discrete(X, Y0, a, b, SlicedConfig(cfg.directions, cfg.seed))
            result = {"value": sr.value, "stderr": sr.stderr, "directions": sr.num_directions}
        elif cfg.target_points is not None:
            mr = max_sliced_discrete(X, Y0, a, b, MaxSlicedOptions(seed=cfg.seed))
            result = {"value": mr.value, "direction": mr.direction, "evaluations": mr.evaluations}
        else:
            mr = max_sliced_semidiscrete(d, Y0, MaxSlicedOptions(seed=cfg.seed))
            result = {"value": mr.value, "direction": mr.direction, "evaluations": mr.evaluations}
        result.update(points=Y0, weights=b, converged=True, iterations=0)
    result = {"solver": cfg.solver, "n": len(Y), "seed": cfg.seed, "density": str(cfg.density), **result}
    if cfg.trace:
        write_trace_csv(cfg.trace, trace)
    if cfg.out:
        write_result_json(cfg.out, result)
    else:
        print(json.dumps({k: result[k] for k in ("solver", "n", "converged") if k in result}))
    if part is None and (cfg.render or cfg.labels or cfg.cell_stats):
        part = voronoi_partition(d, Y, merge_ties=True)
    if part is not None:
        _partition_output(cfg, d, part)
    if cfg.render:
        render_svg(cfg.render, d, part.labels, Y, masses)
    return status


def verify(cfg: RunConfig) -> int:
    d = load_density(cfg)
    Y0 = initial_points(cfg, d)
    checks = verify_suite(
        d, Y0, iterations=cfg.iterations, epsilon=cfg.epsilon, mass_tol=cfg.mass_tol, grad_scale=cfg.fault_grad_scale
    )
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print("all checks passed" if ok else f"{sum(not c.passed for c in checks)} check(s) failed")
    if cfg.out:
        write_result_json(
            cfg.out,
            {
                "passed": ok,
                "checks": [
                    {"name": c.name, "passed": c.passed, "residual": c.residual, "tolerance": c.tolerance} for c in checks
                ],
            },
        )
    return EXIT_OK if ok else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdq", description="Semi-discrete transport quantization")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("quantize", "run a solver"), ("verify", "check gradients and descent inequalities")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="JSON file with default settings; flags override it")
        s.add_argument("--density", help="uniform:lo,hi | uniform:lx,ly,hx,hy | fig1 | image.pgm | mixture.json")
        s.add_argument("--solver", choices=SOLVERS)
        s.add_argument("--n", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--points", help='initial points: "0.2,0.6" or "x,y;x,y"')
        s.add_argument("--target-points", help="second point cloud for sliced solvers")
        s.add_argument("--resolution", help="grid cells per axis, e.g. 1000 or 128,128")
        s.add_argument("--max-iter", type=int)
        s.add_argument("--step-tol", type=float)
        s.add_argument("--mass-tol", type=float)
        s.add_argument("--epsilon", type=float)
        s.add_argument("--directions", type=int)
        s.add_argument("--iterations", type=int, help="outer iterations for the descent checks (verify)")
        s.add_argument("--trace", help="trace CSV path")
        s.add_argument("--out", help="result JSON path")
        s.add_argument("--render", help="SVG path")
        s.add_argument("--labels", help="label raster PGM path")
        s.add_argument("--cell-stats", help="per-region statistics CSV path")
        s.add_argument("--fault-grad-scale", type=float, help=argparse.SUPPRESS)
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)} - {"extra"}
    unknown = set(base) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in known:
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    cfg = RunConfig(**base)
    if cfg.points is not None:
        cfg.points = parse_points(cfg.points)
    if cfg.target_points is not None:
        cfg.target_points = parse_points(cfg.target_points)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        return quantize(cfg) if args.command == "quantize" else verify(cfg)
    except (ConfigError, DegenerateMeasureError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, EmptyCellError, DiagonalError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, PGMFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
