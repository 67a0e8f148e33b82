"""Lloyd fixed-point solvers for optimal and uniform quantization.

Optimal quantization minimizes ``G(Y) = 1/2 int min_i ||x - y_i||^2 dmu`` by
iterating the Voronoi barycentric map; uniform quantization minimizes
``F(Y) = 1/2 W_2^2(mu, 1/N sum delta_{y_i})`` by iterating the Laguerre
barycentric map, with the power-cell weights from ``solve_dual``.

Both losses carry the factor 1/2, so they are directly comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cells import as_points, on_diagonal, tie_weights, voronoi_partition
from .cost import SQUARED_EUCLIDEAN, squared_distances
from .density import GridDensity
from .dual import DualReport, DualWeights, SolverOptions, solve_dual
from .errors import ConvergenceError, DiagonalError, EmptyCellError


@dataclass
class LloydOptions:
    """Outer-loop settings. ``step_tol=None`` means ``1e-9 * diam(supp mu)``."""

    max_iter: int = 10000
    step_tol: Optional[float] = None
    check_descent: bool = True
    seed: int = 0
    inner: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.step_tol is not None and self.step_tol < 0:
            raise ValueError("step_tol must be >= 0")


TRACE_FIELDS = (
    "n",
    "loss",
    "gradNorm",
    "stepNorm",
    "minCellMass",
    "descentLHS",
    "descentRHS",
    "innerIterations",
)


@dataclass
class TraceRow:
    """One outer iteration ``Y_n -> Y_{n+1}``.

    ``descent_lhs = loss(Y_n) - loss(Y_{n+1})``. For the optimal variant
    ``descent_rhs`` is the strong-descent bound ``(l/2) |grad| |step|`` and
    ``inter_rhs = 1/2 sum_i mu(V_i) |dy_i|^2``; for the uniform variant
    ``descent_rhs = |step|^2 / (2N)`` and ``slack`` bounds the inner-solver
    error on the loss difference.
    """

    n: int
    loss: float
    grad_norm: float
    step_norm: float
    min_cell_mass: float
    descent_lhs: float
    descent_rhs: float
    inner_iterations: int = 0
    inter_rhs: float = math.nan
    slack: float = 0.0
    inner_residual: float = 0.0
    identity_residual: float = 0.0
    outside_support: bool = False

    def csv_values(self) -> tuple:
        return (
            self.n,
            self.loss,
            self.grad_norm,
            self.step_norm,
            self.min_cell_mass,
            self.descent_lhs,
            self.descent_rhs,
            self.inner_iterations,
        )


@dataclass
class SolverTrace:
    variant: str
    rows: list = field(default_factory=list)
    converged: bool = False
    final_loss: float = math.nan
    final_grad_norm: float = math.nan
    final_masses: Optional[np.ndarray] = None
    final_weights: Optional[DualWeights] = None
    ell_hat: float = math.inf

    @property
    def iterations(self) -> int:
        return len(self.rows)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.rows] + [self.final_loss])

    def violations(self, slack: float = 1e-10) -> list:
        """Descent inequalities that fail along the trace, as readable strings."""
        out = []
        for r in self.rows:
            if r.descent_lhs < -slack - r.slack:
                out.append(f"n={r.n}: loss increased by {-r.descent_lhs:.3e}")
            if r.descent_lhs < r.descent_rhs - slack - r.slack:
                out.append(f"n={r.n}: descent {r.descent_lhs:.6e} < bound {r.descent_rhs:.6e}")
            if self.variant == "optimal" and r.descent_lhs < r.inter_rhs - slack:
                out.append(f"n={r.n}: descent {r.descent_lhs:.6e} < 1/2 sum mu|dy|^2 {r.inter_rhs:.6e}")
            if self.variant == "optimal" and not r.min_cell_mass > 0:
                out.append(f"n={r.n}: empty Voronoi cell")
        return out


def _check_off_diagonal(Y, what="points"):
    if on_diagonal(Y):
        raise DiagonalError(f"{what} lie on the generalized diagonal (two points coincide)")


def _sq_frob(A) -> float:
    return math.fsum(np.ravel(A) ** 2)


# -- optimal quantization ----------------------------------------------------


def loss_optimal(d: GridDensity, Y) -> float:
    """``1/2 sum_k m_k min_i ||x_k - y_i||^2``; duplicates are harmless."""
    Y = as_points(Y, d.dim)
    sqd = squared_distances(d.centers[d.support], Y)
    return 0.5 * math.fsum(d.masses[d.support] * sqd.min(axis=1))


def _voronoi_state(d, Y, iteration=None):
    part = voronoi_partition(d, Y)
    empty = part.empty_regions()
    if empty.size:
        raise EmptyCellError(
            f"Voronoi cell {int(empty[0])} is empty" + ("" if iteration is None else f" at iteration {iteration}"),
            iteration=iteration,
            index=int(empty[0]),
        )
    loss = 0.5 * math.fsum(part.second_moments)
    return part, loss


def step_optimal(d: GridDensity, Y) -> np.ndarray:
    """Voronoi barycentric map: each point moves to its cell's barycenter."""
    Y = as_points(Y, d.dim)
    _check_off_diagonal(Y)
    part, _ = _voronoi_state(d, Y)
    return part.barycenters


def grad_optimal(d: GridDensity, Y) -> np.ndarray:
    """``diag(mu(V_i)) (Y - T(Y))``. Rows of empty cells are zero."""
    Y = as_points(Y, d.dim)
    _check_off_diagonal(Y)
    part = voronoi_partition(d, Y)
    diff = np.where(part.masses[:, None] > 0, Y - np.nan_to_num(part.barycenters), 0.0)
    return part.masses[:, None] * diff


def _step_tol(d, opts):
    return 1e-9 * d.support_diameter() if opts.step_tol is None else opts.step_tol


def run_optimal(d: GridDensity, Y0, opts: Optional[LloydOptions] = None):
    """Lloyd iterations ``Y_{n+1} = T(Y_n)``.

    Stops when ``|Y_{n+1} - Y_n| <= step_tol`` or after ``max_iter`` steps.
    Iterates that leave the support are flagged in the trace, not projected.

    Returns
    -------
    Y : ndarray, shape (N, dim)
    trace : SolverTrace
    """
    opts = opts or LloydOptions()
    Y = as_points(Y0, d.dim).copy()
    _check_off_diagonal(Y, "initial points")
    step_tol = _step_tol(d, opts)
    trace = SolverTrace("optimal")
    part, loss = _voronoi_state(d, Y, 0)
    ell = math.inf
    for n in range(opts.max_iter):
        T = part.barycenters
        grad = part.masses[:, None] * (Y - T)
        if on_diagonal(T):
            raise DiagonalError(f"iterate {n + 1} lies on the generalized diagonal")
        part_new, loss_new = _voronoi_state(d, T, n + 1)
        dY = T - Y
        step_norm = math.sqrt(_sq_frob(dY))
        grad_norm = math.sqrt(_sq_frob(grad))
        min_mass = float(part.masses.min())
        ell = min(ell, min_mass)
        row = TraceRow(
            n=n,
            loss=loss,
            grad_norm=grad_norm,
            step_norm=step_norm,
            min_cell_mass=min_mass,
            descent_lhs=loss - loss_new,
            descent_rhs=0.5 * ell * grad_norm * step_norm,
            inter_rhs=0.5 * math.fsum(part.masses * np.sum(dY * dY, axis=1)),
            outside_support=not bool(np.all(d.in_support(T))),
        )
        trace.rows.append(row)
        Y, part, loss = T, part_new, loss_new
        if step_norm <= step_tol:
            trace.converged = True
            break
    trace.ell_hat = ell
    trace.final_loss = loss
    trace.final_grad_norm = math.sqrt(_sq_frob(part.masses[:, None] * (Y - part.barycenters)))
    trace.final_masses = part.masses.copy()
    return Y, trace


# -- uniform quantization ----------------------------------------------------


def _uniform_state(d, Y, inner: SolverOptions, w0=None, iteration=None) -> DualReport:
    rep = solve_dual(d, Y, SQUARED_EUCLIDEAN, tie_weights(Y), inner, w0=w0)
    if not rep.converged:
        where = "" if iteration is None else f" at iteration {iteration}"
        raise ConvergenceError(
            f"dual solver did not converge{where}: max residual {rep.max_residual:.3e} > {rep.mass_tol:.3e}",
            report=rep,
            iteration=iteration,
        )
    return rep


def loss_uniform(d: GridDensity, Y, inner: Optional[SolverOptions] = None, w0=None):
    """``F(Y) = 1/2 max_w g(Y, w)`` and the maximizing weights.

    Coincident points are merged through the tie weights, so this is defined
    on the whole space.
    """
    Y = as_points(Y, d.dim)
    rep = _uniform_state(d, Y, inner or SolverOptions(), w0)
    return 0.5 * rep.value, rep.weights


def step_uniform(d: GridDensity, Y, inner: Optional[SolverOptions] = None, w0=None):
    """Laguerre barycentric map; returns the new points and the weights used."""
    Y = as_points(Y, d.dim)
    _check_off_diagonal(Y)
    rep = _uniform_state(d, Y, inner or SolverOptions(), w0)
    return rep.barycenters.copy(), rep.weights


def grad_uniform(d: GridDensity, Y, inner: Optional[SolverOptions] = None, w0=None) -> np.ndarray:
    """``(Y - B(Y)) / N``."""
    Y = as_points(Y, d.dim)
    B, _ = step_uniform(d, Y, inner, w0)
    return (Y - B) / len(Y)


def _slack(rep_a: DualReport, rep_b: DualReport, cmax: float) -> float:
    # a plan whose marginal is off by r costs at most |r|_1 * max c away from optimal
    r = np.abs(rep_a.mass_residuals).sum() + np.abs(rep_b.mass_residuals).sum()
    return 0.5 * cmax * float(r)


def run_uniform(d: GridDensity, Y0, opts: Optional[LloydOptions] = None):
    """Lloyd iterations ``Y_{n+1} = B(Y_n)`` with warm-started dual solves.

    Returns
    -------
    Y : ndarray, shape (N, dim)
    trace : SolverTrace
    """
    opts = opts or LloydOptions()
    Y = as_points(Y0, d.dim).copy()
    _check_off_diagonal(Y, "initial points")
    N = len(Y)
    step_tol = _step_tol(d, opts)
    cmax = d.support_diameter() ** 2
    trace = SolverTrace("uniform")
    rep = _uniform_state(d, Y, opts.inner, iteration=0)
    loss = 0.5 * rep.value
    for n in range(opts.max_iter):
        B = rep.barycenters.copy()
        grad = (Y - B) / N
        if on_diagonal(B):
            raise DiagonalError(f"iterate {n + 1} lies on the generalized diagonal")
        rep_new = _uniform_state(d, B, opts.inner, w0=rep.w, iteration=n + 1)
        loss_new = 0.5 * rep_new.value
        dY = B - Y
        step_sq = _sq_frob(dY)
        row = TraceRow(
            n=n,
            loss=loss,
            grad_norm=math.sqrt(_sq_frob(grad)),
            step_norm=math.sqrt(step_sq),
            min_cell_mass=float(rep.masses[rep.masses > 0].min()),
            descent_lhs=loss - loss_new,
            descent_rhs=step_sq / (2 * N),
            inner_iterations=rep.iterations,
            slack=_slack(rep, rep_new, cmax),
            inner_residual=max(rep.max_residual, rep_new.max_residual),
            identity_residual=math.sqrt(_sq_frob(B - (Y - N * grad))),
            outside_support=not bool(np.all(d.in_support(B))),
        )
        trace.rows.append(row)
        Y, rep, loss = B, rep_new, loss_new
        if row.step_norm <= step_tol:
            trace.converged = True
            break
    trace.ell_hat = min((r.min_cell_mass for r in trace.rows), default=math.inf)
    trace.final_loss = loss
    trace.final_grad_norm = math.sqrt(_sq_frob((Y - rep.barycenters) / N))
    trace.final_masses = rep.masses.copy()
    trace.final_weights = rep.weights
    return Y, trace
