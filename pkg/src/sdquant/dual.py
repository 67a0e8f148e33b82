"""Semi-discrete Kantorovich dual for a grid density and N weighted points.

The concave objective is

    g(w) = sum_k m_k min_{i active} (c(x_k, y_i) - w_i) + sum_i lam_i w_i

over the grid atoms ``(x_k, m_k)``. Its maximum is the transport cost between
the grid measure and ``sum_i lam_i delta_{y_i}``.

``solve_dual`` runs supergradient ascent with Armijo backtracking. Because the
grid measure is atomic, hard-assigned cell masses jump by whole atoms and the
ascent alone stalls at grid granularity. A polishing pass then resolves the
atoms sitting on cell boundaries: it solves the transport problem restricted
to a band of near-tied (atom, point) pairs, and recovers the optimal potentials
from the resulting plan by shortest paths. The band grows until the plan
passes a global optimality certificate (no negative cycle in the
cyclic-monotonicity graph).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .cells import as_points, tie_weights
from .cost import SQUARED_EUCLIDEAN, CostSpec
from .density import GridDensity

log = logging.getLogger(__name__)

ANCHORS = ("mean_zero", "first_zero")


@dataclass
class SolverOptions:
    """Inner dual solver settings.

    ``mass_tol=None`` means ``max(1e-9, 2 * largest cell mass)``.
    """

    mass_tol: Optional[float] = None
    max_iter: int = 10000
    verbose: bool = False
    polish: bool = True
    step0: float = 1.0
    shrink: float = 0.5
    armijo: float = 0.1
    anchor: str = "mean_zero"

    def __post_init__(self):
        if self.anchor not in ANCHORS:
            raise ValueError(f"anchor must be one of {ANCHORS}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


@dataclass
class DualWeights:
    w: np.ndarray
    anchor: str = "mean_zero"


@dataclass
class DualReport:
    """Outcome of ``solve_dual``.

    ``masses``/``barycenters`` come from the optimal transport plan, in which
    atoms lying exactly on a cell boundary may be split between cells;
    ``cell_masses`` are the hard-assigned masses of the power cells at ``w``.
    ``mass_residuals = lam - masses``.
    """

    weights: DualWeights
    value: float
    mass_residuals: np.ndarray
    iterations: int
    converged: bool
    masses: np.ndarray
    barycenters: np.ndarray
    cell_masses: np.ndarray
    mass_tol: float
    polished: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def w(self) -> np.ndarray:
        return self.weights.w

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.mass_residuals))) if self.mass_residuals.size else 0.0


def default_mass_tol(d: GridDensity) -> float:
    return max(1e-9, 2.0 * float(d.masses.max()))


def _apply_anchor(w: np.ndarray, active: np.ndarray, anchor: str) -> np.ndarray:
    w = np.where(active, w, 0.0)
    if anchor == "mean_zero":
        shift = w[active].mean()
    else:
        shift = w[np.flatnonzero(active)[0]]
    w = np.where(active, w - shift, 0.0)
    return w


class _Problem:
    """Support atoms, active points and their cost matrix."""

    def __init__(self, d: GridDensity, Y: np.ndarray, cost: CostSpec, lam: np.ndarray):
        idx = d.support
        self.x = d.centers[idx]
        self.m = d.masses[idx]
        self.lam_full = lam
        self.active = lam > 0
        if not self.active.any():
            raise ValueError("at least one target weight must be positive")
        self.act_idx = np.flatnonzero(self.active)
        self.lam = lam[self.active]
        self.C = cost.matrix(self.x, Y[self.active])
        self.scale = max(float(self.C.max() - self.C.min()), 1e-300)

    def evaluate(self, w):
        E = self.C - w
        lab = np.argmin(E, axis=1)
        mins = E[np.arange(len(lab)), lab]
        value = float(self.m @ mins + self.lam @ w)
        masses = np.bincount(lab, weights=self.m, minlength=len(w))
        return value, masses, lab

    def exact_value(self, w) -> float:
        E = self.C - w
        mins = E.min(axis=1)
        return math.fsum(np.concatenate([self.m * mins, self.lam * w]))


def dual_objective(d: GridDensity, Y, w, cost: CostSpec = SQUARED_EUCLIDEAN, target=None) -> float:
    """Evaluate the dual objective ``g(w)``; inactive indices of ``w`` are ignored.

    For squared Euclidean cost and uniform weights this is twice the
    half-normalized dual used for uniform quantization.
    """
    Y = as_points(Y, d.dim)
    lam = tie_weights(Y) if target is None else np.asarray(target, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    prob = _Problem(d, Y, cost, lam)
    return prob.exact_value(w[prob.active])


def _ascent(prob: _Problem, w: np.ndarray, stop_tol: float, opts: SolverOptions, history: list):
    value, masses, _ = prob.evaluate(w)
    t = opts.step0 * prob.scale
    t_max = 1e6 * prob.scale
    t_min = 1e-14 * prob.scale
    best_res = math.inf
    since_best = 0
    it = 0
    reached = False
    for it in range(opts.max_iter + 1):
        s = prob.lam - masses
        res = float(np.abs(s).max())
        history.append({"iteration": it, "value": value, "residual": res, "step": t})
        if res <= stop_tol:
            reached = True
            break
        if it == opts.max_iter:
            break
        if res < best_res:
            best_res, since_best = res, 0
        else:
            since_best += 1
            if opts.polish and since_best > 200:
                break
        ss = float(s @ s)
        t = min(2.0 * t, t_max) if it else t
        while True:
            w_new = w + t * s
            v_new, m_new, _ = prob.evaluate(w_new)
            if v_new >= value + opts.armijo * t * ss:
                break
            t *= opts.shrink
            if t < t_min:
                w_new = None
                break
        if w_new is None:
            break
        w, value, masses = w_new, v_new, m_new
        if opts.verbose:
            log.info("dual ascent %d: value=%.16g residual=%.3e step=%.3e", it, value, res, t)
    return w, it, reached


def _shortest_path_potentials(D: np.ndarray, tol: float):
    """Potentials with ``v_j - v_i <= D[i, j]``, centred in the feasible set.

    Returns None when the constraint graph has a negative cycle.
    """
    D = D.copy()
    np.fill_diagonal(D, np.minimum(np.diag(D), 0.0))
    for k in range(len(D)):
        D = np.minimum(D, D[:, k : k + 1] + D[k : k + 1, :])
    if np.diag(D).min() < -tol:
        return None
    return 0.5 * (D[0, :] - D[:, 0])


def _polish(prob: _Problem, w: np.ndarray):
    """Exact optimum near ``w``; returns (w, plan masses, plan first moments) or None."""
    C, m, lam, x = prob.C, prob.m, prob.lam, prob.x
    K, A = C.shape
    if A == 1:
        return np.zeros(1), np.array([m.sum()]), (m @ x)[None, :]
    E = C - w
    lab0 = np.argmin(E, axis=1)
    R = E - E[np.arange(K), lab0][:, None]
    gap = np.partition(R, 1, axis=1)[:, 1]
    gaps = np.sort(gap)
    n_band = min(K, 64 * A)
    tol = 1e-11 * prob.scale
    while True:
        full = n_band >= K
        delta = math.inf if full else float(gaps[n_band - 1])
        cand = R <= delta
        amb = cand.sum(axis=1) >= 2
        fixed = ~amb
        fmass = np.bincount(lab0[fixed], weights=m[fixed], minlength=A)
        need = lam - fmass
        result = None
        if need.min() >= -1e-15:
            result = _restricted_plan(R, m, amb, cand, need)
        if result is not None:
            qidx, G = result
            masses = fmass + G.sum(axis=0)
            first = np.stack(
                [np.bincount(lab0[fixed], weights=m[fixed] * x[fixed, a], minlength=A) for a in range(x.shape[1])],
                axis=1,
            ) + G.T @ x[qidx]
            D = np.full((A, A), math.inf)
            for i in range(A):
                rows = np.concatenate(
                    [np.flatnonzero(fixed & (lab0 == i)), qidx[G[:, i] > 1e-8 * m[qidx]]]
                )
                if rows.size:
                    sub = C[rows]
                    D[i] = (sub - sub[:, i : i + 1]).min(axis=0)
            v = _shortest_path_potentials(D, tol)
            if v is not None:
                return v, masses, first
        if full:
            return None
        n_band = min(K, 4 * n_band)


def _restricted_plan(R, m, amb, cand, need):
    """Min-cost split of the ambiguous atoms over their candidate points."""
    qidx = np.flatnonzero(amb)
    A = R.shape[1]
    if qidx.size == 0:
        if np.abs(need).max() <= 1e-15:
            return qidx, np.zeros((0, A))
        return None
    rows_q, cols = np.nonzero(cand[qidx])
    nvar = rows_q.size
    mscale = float(m[qidx].mean())
    cost = R[qidx[rows_q], cols]
    cscale = max(float(cost.max()), 1e-300)
    # atom rows, then one row per point except the last (implied by the rest)
    keep = cols < A - 1
    ri = np.concatenate([rows_q, qidx.size + cols[keep]])
    ci = np.concatenate([np.arange(nvar), np.arange(nvar)[keep]])
    A_eq = sp.csr_matrix((np.ones(ri.size), (ri, ci)), shape=(qidx.size + A - 1, nvar))
    b_eq = np.concatenate([m[qidx], np.maximum(need[:-1], 0.0)]) / mscale
    res = linprog(
        cost / cscale,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        return None
    G = np.zeros((qidx.size, A))
    G[rows_q, cols] = np.maximum(res.x, 0.0) * mscale
    rowsum = G.sum(axis=1)
    G *= (m[qidx] / np.where(rowsum > 0, rowsum, 1.0))[:, None]
    return qidx, G


def solve_dual(
    d: GridDensity,
    Y,
    cost: CostSpec = SQUARED_EUCLIDEAN,
    target=None,
    opts: Optional[SolverOptions] = None,
    w0=None,
) -> DualReport:
    """Maximize the semi-discrete dual over the weights of the active points.

    Parameters
    ----------
    d : GridDensity
    Y : array_like, shape (N, dim)
    cost : CostSpec
    target : array_like, optional
        Target weights (a probability vector). Defaults to the tie weights of
        ``Y``, which merge coincident points.
    opts : SolverOptions, optional
    w0 : array_like, optional
        Warm start (length N; inactive entries ignored).

    Returns
    -------
    DualReport
        ``converged`` is False when the mass residuals stay above the
        tolerance (no exception is raised here).
    """
    opts = opts or SolverOptions()
    Y = as_points(Y, d.dim)
    lam = tie_weights(Y) if target is None else np.asarray(target, dtype=float).ravel()
    if lam.shape != (len(Y),):
        raise ValueError("target must have one weight per point")
    if np.any(lam < 0) or abs(math.fsum(lam) - 1.0) > 1e-12:
        raise ValueError("target weights must be a probability vector")
    mass_tol = default_mass_tol(d) if opts.mass_tol is None else float(opts.mass_tol)
    prob = _Problem(d, Y, cost, lam)
    A = len(prob.lam)
    w = np.zeros(A) if w0 is None else np.asarray(w0, dtype=float).ravel()[prob.active].copy()

    history: list = []
    stop_tol = max(mass_tol, 2.0 * float(prob.m.max())) if opts.polish else mass_tol
    w, iterations, _ = _ascent(prob, w, stop_tol, opts, history)

    polished = False
    _, cell_masses, lab = prob.evaluate(w)
    masses = cell_masses
    first = np.stack([np.bincount(lab, weights=prob.m * prob.x[:, a], minlength=A) for a in range(d.dim)], axis=1)
    if opts.polish:
        out = _polish(prob, w)
        if out is None:
            log.warning("dual polish found no certified optimum; keeping ascent iterate")
        else:
            w, masses, first = out
            polished = True
            _, cell_masses, _ = prob.evaluate(w)

    w_full = np.zeros(len(Y))
    w_full[prob.active] = w
    w_full = _apply_anchor(w_full, prob.active, opts.anchor)
    w_act = w_full[prob.active]
    value = prob.exact_value(w_act)
    if history:
        history.append({"iteration": iterations + 1, "value": value, "residual": None, "step": None})

    full_masses = np.zeros(len(Y))
    full_masses[prob.active] = masses
    full_cells = np.zeros(len(Y))
    full_cells[prob.active] = cell_masses
    bary = np.full((len(Y), d.dim), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        bary[prob.active] = first / masses[:, None]
    residuals = np.where(prob.active, lam - full_masses, 0.0)
    converged = bool(np.abs(residuals).max() <= mass_tol)
    return DualReport(
        weights=DualWeights(w_full, opts.anchor),
        value=value,
        mass_residuals=residuals,
        iterations=iterations,
        converged=converged,
        masses=full_masses,
        barycenters=bary,
        cell_masses=full_cells,
        mass_tol=mass_tol,
        polished=polished,
        history=history,
    )
