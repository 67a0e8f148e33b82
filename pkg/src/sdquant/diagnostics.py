"""Numerical checks of the gradient formulas and descent inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .cells import as_points, tie_weights
from .cost import SQUARED_EUCLIDEAN
from .density import GridDensity
from .divergences import EntropicConfig, entropic_semidiscrete
from .dual import SolverOptions, solve_dual
from .lloyd import (
    LloydOptions,
    SolverTrace,
    grad_optimal,
    grad_uniform,
    loss_optimal,
    loss_uniform,
    run_optimal,
    run_uniform,
)

DESCENT_SLACK = 1e-10
FD_STEP = 1e-4
FD_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{mark}  {self.name:<28} residual={self.residual:.3e}  tol={self.tolerance:.3e}{extra}"


def fd_gradient(f: Callable, Y, h: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function of an ``(N, dim)`` array."""
    Y = np.asarray(Y, dtype=float)
    g = np.zeros_like(Y)
    for idx in np.ndindex(Y.shape):
        up, dn = Y.copy(), Y.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (f(up) - f(dn)) / (2 * h)
    return g


def relative_gradient_error(analytic, fd) -> float:
    """Largest per-coordinate gap, scaled by the largest gradient entry.

    Scaling by the sup norm instead of per coordinate keeps exactly-zero
    components from producing meaningless ratios.
    """
    analytic, fd = np.asarray(analytic), np.asarray(fd)
    scale = max(np.abs(analytic).max(), np.abs(fd).max())
    err = np.abs(analytic - fd).max()
    if scale == 0:
        return float(err)
    return float(err / scale)


def check_grad_optimal(d: GridDensity, Y, h=FD_STEP, tol=FD_TOL, scale=1.0) -> CheckResult:
    """Voronoi gradient ``M(Y - T(Y))`` against central differences of the loss."""
    Y = as_points(Y, d.dim)
    g = scale * grad_optimal(d, Y)
    fd = fd_gradient(lambda Z: loss_optimal(d, Z), Y, h)
    r = relative_gradient_error(g, fd)
    return CheckResult("gradient (Voronoi)", r <= tol, r, tol)


def check_grad_uniform(d: GridDensity, Y, h=FD_STEP, tol=FD_TOL, mass_tol=1e-10, scale=1.0) -> CheckResult:
    """Laguerre gradient ``(Y - B(Y)) / N`` against central differences of the loss."""
    Y = as_points(Y, d.dim)
    inner = SolverOptions(mass_tol=mass_tol)
    _, wts = loss_uniform(d, Y, inner)
    g = scale * grad_uniform(d, Y, inner, w0=wts.w)
    fd = fd_gradient(lambda Z: loss_uniform(d, Z, inner, w0=wts.w)[0], Y, h)
    r = relative_gradient_error(g, fd)
    return CheckResult("gradient (Laguerre)", r <= tol, r, tol)


def _excess(x: float) -> float:
    return float(x) if x > 0 else 0.0


def descent_checks(trace: SolverTrace, slack: float = DESCENT_SLACK, diam: Optional[float] = None) -> list:
    """Every descent inequality recorded in a trace, worst case over iterations."""
    rows = trace.rows
    tag = "optimal" if trace.variant == "optimal" else "uniform"
    out = []
    if not rows:
        return out
    lhs = np.array([r.descent_lhs for r in rows])
    rhs = np.array([r.descent_rhs for r in rows])
    extra = np.array([r.slack for r in rows])
    worst = float(np.max(-lhs - extra))
    out.append(CheckResult(f"monotone loss ({tag})", worst <= slack, _excess(worst), slack))
    worst = float(np.max(rhs - lhs - extra))
    name = "strong descent (optimal)" if tag == "optimal" else "1/(2N) descent (uniform)"
    out.append(CheckResult(name, worst <= slack, _excess(worst), slack))
    if tag == "optimal":
        inter = np.array([r.inter_rhs for r in rows])
        worst = float(np.max(inter - lhs))
        out.append(CheckResult("mass-weighted step descent", worst <= slack, _excess(worst), slack))
        mm = min(r.min_cell_mass for r in rows)
        out.append(CheckResult("cell masses stay positive", mm > 0, mm, 0.0))
    else:
        ident = max(r.identity_residual for r in rows)
        n_pts = len(trace.final_masses)
        tol = n_pts * max(r.inner_residual for r in rows) * (diam or 1.0) + 1e-12
        out.append(CheckResult("gradient-step identity", ident <= tol, ident, tol))
    return out


def verify_suite(
    d: GridDensity,
    Y0,
    iterations: int = 10,
    fd_step: float = FD_STEP,
    fd_tol: float = FD_TOL,
    epsilon: Optional[float] = None,
    mass_tol: Optional[float] = None,
    grad_scale: float = 1.0,
) -> list:
    """All checks on one instance. ``grad_scale`` multiplies the analytic gradients (fault injection)."""
    Y0 = as_points(Y0, d.dim)
    diam = d.support_diameter()
    checks = [
        check_grad_optimal(d, Y0, fd_step, fd_tol, grad_scale),
        check_grad_uniform(d, Y0, fd_step, fd_tol, scale=grad_scale),
    ]
    inner = SolverOptions(mass_tol=mass_tol)
    _, tr = run_optimal(d, Y0, LloydOptions(max_iter=iterations))
    checks += descent_checks(tr)
    _, tr = run_uniform(d, Y0, LloydOptions(max_iter=iterations, inner=inner))
    checks += descent_checks(tr, diam=diam)
    rep = solve_dual(d, Y0, SQUARED_EUCLIDEAN, tie_weights(Y0), inner)
    checks.append(CheckResult("dual mass residual", rep.converged, rep.max_residual, rep.mass_tol))
    eps = 0.01 * diam**2 if epsilon is None else epsilon
    cfg = EntropicConfig(epsilon=eps)
    ent = entropic_semidiscrete(d, Y0, cfg=cfg, raise_on_failure=False)
    checks.append(CheckResult("entropic gradient", ent.converged, ent.grad_norm, cfg.grad_tol))
    total = math.fsum(ent.soft_masses)
    checks.append(CheckResult("entropic soft mass total", abs(total - 1) <= 1e-10, abs(total - 1), 1e-10))
    return checks
