"""Sliced, max-sliced and entropic transport losses.

Discrete measures are passed as ``(points, weights)`` pairs. A grid density
enters the sliced losses as its atoms (cell centers with cell masses), so the
projected 1-D problems stay exact under the grid model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .cells import as_points, tie_weights
from .cost import SQUARED_EUCLIDEAN, CostSpec
from .density import GridDensity
from .dual import DualWeights, SolverOptions, solve_dual
from .errors import ConvergenceError

SIMPLEX_TOL = 1e-12


def _simplex(w, n, name) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != (n,):
        raise ValueError(f"{name}: expected {n} weights, got {w.shape}")
    if np.any(w < 0) or abs(math.fsum(w) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name}: weights must be nonnegative and sum to 1 within {SIMPLEX_TOL}")
    return w


def _uniform(n) -> np.ndarray:
    return np.full(n, 1.0 / n)


# -- one-dimensional exact W2 --------------------------------------------------


def w2_1d_discrete(xa, wa, xb, wb) -> float:
    """Exact ``W_2^2`` between two weighted point sets on the line.

    Integrates ``(F_a^{-1}(t) - F_b^{-1}(t))^2`` over the merged breakpoints
    of both cumulative weight sequences.
    """
    xa = np.asarray(xa, dtype=float).ravel()
    xb = np.asarray(xb, dtype=float).ravel()
    wa = _simplex(wa, len(xa), "first measure")
    wb = _simplex(wb, len(xb), "second measure")
    oa, ob = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa, xb, wb = xa[oa], wa[oa], xb[ob], wb[ob]
    ta, tb = np.cumsum(wa), np.cumsum(wb)
    ta[-1] = tb[-1] = 1.0
    t = np.union1d(ta, tb)
    t = t[t <= 1.0]
    lengths = np.diff(t, prepend=0.0)
    keep = lengths > 0
    t, lengths = t[keep], lengths[keep]
    mid = t - 0.5 * lengths
    ia = np.minimum(np.searchsorted(ta, mid, side="right"), len(xa) - 1)
    ib = np.minimum(np.searchsorted(tb, mid, side="right"), len(xb) - 1)
    return math.fsum(lengths * (xa[ia] - xb[ib]) ** 2)


# -- sliced ------------------------------------------------------------------


@dataclass
class SlicedConfig:
    """Monte Carlo settings: ``num_directions`` uniform samples on the sphere."""

    num_directions: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.num_directions < 1:
            raise ValueError("num_directions must be >= 1")

    def directions(self, dim: int) -> np.ndarray:
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        g = np.random.default_rng(self.seed).standard_normal((self.num_directions, dim))
        return g / np.linalg.norm(g, axis=1, keepdims=True)


def _cloud(X, w, name):
    X = as_points(X)
    w = _uniform(len(X)) if w is None else _simplex(w, len(X), name)
    return X, w


def sliced_w2_samples(X, Yb, a=None, b=None, directions=None, cfg: Optional[SlicedConfig] = None) -> np.ndarray:
    """Per-direction 1-D ``W_2^2`` of the projected clouds (uniform weights if omitted)."""
    X, a = _cloud(X, a, "first cloud")
    Yb, b = _cloud(Yb, b, "second cloud")
    if X.shape[1] != Yb.shape[1]:
        raise ValueError(f"clouds live in different dimensions ({X.shape[1]} vs {Yb.shape[1]})")
    if directions is None:
        directions = (cfg or SlicedConfig()).directions(X.shape[1])
    th = np.atleast_2d(np.asarray(directions, dtype=float))
    PX, PY = X @ th.T, Yb @ th.T
    return np.array([w2_1d_discrete(PX[:, j], a, PY[:, j], b) for j in range(len(th))])


@dataclass
class SlicedResult:
    value: float
    stderr: float
    num_directions: int


def sliced_w2_discrete(X, Yb, a=None, b=None, cfg: Optional[SlicedConfig] = None) -> SlicedResult:
    """Monte Carlo sliced ``W_2^2``; in one dimension the value is exact."""
    cfg = cfg or SlicedConfig()
    X = as_points(X)
    if X.shape[1] == 1:
        Yb = as_points(Yb)
        X, a = _cloud(X, a, "first cloud")
        Yb, b = _cloud(Yb, b, "second cloud")
        if Yb.shape[1] != 1:
            raise ValueError("clouds live in different dimensions")
        return SlicedResult(w2_1d_discrete(X[:, 0], a, Yb[:, 0], b), 0.0, cfg.num_directions)
    vals = sliced_w2_samples(X, Yb, a, b, cfg=cfg)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.inf
    return SlicedResult(math.fsum(vals) / len(vals), se, len(vals))


def density_atoms(d: GridDensity):
    """Support cell centers and their masses, renormalized against rounding."""
    m = d.masses[d.support]
    return d.centers[d.support], m / math.fsum(m)


# -- max-sliced ----------------------------------------------------------------


@dataclass
class MaxSlicedOptions:
    """Multi-start projected ascent on the unit sphere."""

    starts: int = 16
    max_steps: int = 500
    seed: int = 0
    fd_step: float = 1e-6
    tol: float = 1e-13

    def __post_init__(self):
        if self.starts < 1 or self.max_steps < 1:
            raise ValueError("starts and max_steps must be >= 1")


@dataclass
class MaxSlicedResult:
    value: float
    direction: np.ndarray
    evaluations: int
    start_values: list = field(default_factory=list)


def _projected_w2(X, a, Y, b):
    def f(v):
        return w2_1d_discrete(X @ v, a, Y @ v, b)

    return f


def _ascend(f, theta, opts: MaxSlicedOptions):
    """Backtracking ascent of a degree-2 homogeneous ``f`` restricted to the sphere."""
    dim = len(theta)
    val = f(theta)
    evals = 1
    step = 1.0
    h = opts.fd_step
    eye = np.eye(dim)
    for _ in range(opts.max_steps):
        g = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in eye])
        evals += 2 * dim
        g -= (g @ theta) * theta
        gn = np.linalg.norm(g)
        if gn <= opts.tol:
            break
        step *= 2.0
        while True:
            cand = theta + step * g
            cand /= np.linalg.norm(cand)
            cv = f(cand)
            evals += 1
            if cv > val:
                break
            step *= 0.5
            if step * gn < 1e-15:
                return theta, val, evals
        theta, val = cand, cv
    return theta, val, evals


def _max_sliced(X, a, Y, b, opts: MaxSlicedOptions) -> MaxSlicedResult:
    dim = X.shape[1]
    f = _projected_w2(X, a, Y, b)
    if dim == 1:
        one = np.ones(1)
        return MaxSlicedResult(f(one), one, 1, [f(one)])
    starts = SlicedConfig(opts.starts, opts.seed).directions(dim)
    best, best_dir, total, vals = -math.inf, None, 0, []
    for th in starts:
        th, v, n = _ascend(f, th.copy(), opts)
        total += n
        vals.append(v)
        if v > best:
            best, best_dir = v, th
    return MaxSlicedResult(best, best_dir, total, vals)


def max_sliced_discrete(X, Yb, a=None, b=None, opts: Optional[MaxSlicedOptions] = None) -> MaxSlicedResult:
    """``max_theta W_2^2`` of the projected clouds; a certified lower bound."""
    X, a = _cloud(X, a, "first cloud")
    Yb, b = _cloud(Yb, b, "second cloud")
    if X.shape[1] != Yb.shape[1]:
        raise ValueError("clouds live in different dimensions")
    return _max_sliced(X, a, Yb, b, opts or MaxSlicedOptions())


def max_sliced_semidiscrete(d: GridDensity, Y, opts: Optional[MaxSlicedOptions] = None) -> MaxSlicedResult:
    """Max-sliced loss between the grid density and ``sum_i lam_i delta_{y_i}``.

    Coincident points are merged through the tie weights.
    """
    Y = as_points(Y, d.dim)
    X, m = density_atoms(d)
    return _max_sliced(X, m, Y, tie_weights(Y), opts or MaxSlicedOptions())


# -- entropic ------------------------------------------------------------------


@dataclass
class EntropicConfig:
    """Entropic dual ascent settings; ``epsilon`` is the regularization strength."""

    epsilon: float = 0.01
    max_iter: int = 20000
    grad_tol: float = 1e-9

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon}")
        if self.max_iter < 1 or not self.grad_tol > 0:
            raise ValueError("max_iter must be >= 1 and grad_tol > 0")


@dataclass
class EntropicResult:
    """``value`` is the regularized loss; ``soft_masses`` are the soft cell masses."""

    value: float
    weights: DualWeights
    soft_masses: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool
    hard_min_fallback: bool = False
    potential_bound_exceeded: bool = False
    history: list = field(default_factory=list)

    @property
    def w(self) -> np.ndarray:
        return self.weights.w


class _EntropicProblem:
    def __init__(self, d: GridDensity, Y, cost: CostSpec, lam, eps):
        idx = d.support
        self.m = d.masses[idx]
        self.lam = lam
        self.active = np.flatnonzero(lam > 0)
        self.C = cost.matrix(d.centers[idx], Y[self.active])
        self.loglam = np.log(lam[self.active])
        self.eps = eps

    def evaluate(self, w):
        """Value, gradient over active indices, soft masses, fallback flag."""
        wa = w[self.active]
        la = self.lam[self.active]
        with np.errstate(over="ignore", invalid="ignore"):
            Z = (wa - self.C) / self.eps + self.loglam
        if not np.all(np.isfinite(Z)):
            S = self.C - wa
            lab = np.argmin(S, axis=1)
            soft = np.bincount(lab, weights=self.m, minlength=len(wa))
            val = math.fsum(self.m * S[np.arange(len(S)), lab]) + math.fsum(la * wa) - self.eps
            return val, la - soft, soft, True, None
        lse = logsumexp(Z, axis=1, keepdims=True)
        P = np.exp(Z - lse)
        soft = self.m @ P
        val = math.fsum(-self.eps * self.m * lse[:, 0]) + math.fsum(la * wa) - self.eps
        return val, la - soft, soft, False, P

    def newton_direction(self, g, soft, P):
        """Solve ``-H d = g`` with the (N x N) dual Hessian; constants span its kernel."""
        if P is None or len(g) == 1:
            return g
        H = (np.diag(soft) - P.T @ (self.m[:, None] * P)) / self.eps
        H += np.full_like(H, float(np.trace(H)) / len(g) ** 2)
        try:
            d = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return g
        d -= d.mean()
        return d if np.all(np.isfinite(d)) else g


def _potential_bound(d: GridDensity, Y, cost: CostSpec) -> float:
    # 2 * Lip(c) * R with Lip and R taken over the box holding the support and Y
    lo = np.minimum(d.centers[d.support].min(axis=0), Y.min(axis=0))
    hi = np.maximum(d.centers[d.support].max(axis=0), Y.max(axis=0))
    diam = float(np.linalg.norm(hi - lo))
    if cost.is_squared_euclidean:
        lip = 2.0 * diam
    elif cost.kind == "p_power":
        lip = cost.p * diam ** (cost.p - 1)
    else:
        return math.inf
    return 2.0 * lip * diam


def entropic_semidiscrete(
    d: GridDensity,
    Y,
    cost: CostSpec = SQUARED_EUCLIDEAN,
    cfg: Optional[EntropicConfig] = None,
    w0=None,
    raise_on_failure: bool = True,
) -> EntropicResult:
    """Entropy-regularized semi-discrete loss by ascent on the smooth dual.

    Maximizes ``int -eps log sum_i lam_i exp((w_i - c(x, y_i)) / eps) dmu +
    sum_i lam_i w_i - eps`` over the active weights. The gradient is
    preconditioned by the small dense Hessian and every step is Armijo
    backtracked, so the value never decreases.
    Weights are returned with the first active entry pinned to zero.

    Raises
    ------
    ConvergenceError
        If the gradient norm is still above ``cfg.grad_tol`` after
        ``cfg.max_iter`` steps (unless ``raise_on_failure`` is false).
    """
    cfg = cfg or EntropicConfig()
    Y = as_points(Y, d.dim)
    lam = tie_weights(Y)
    prob = _EntropicProblem(d, Y, cost, lam, cfg.epsilon)
    n = len(Y)
    w = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float).copy()
    w[lam == 0] = 0.0
    val, g, soft, fallback, P = prob.evaluate(w)
    history = [val]
    it = 0
    gn = float(np.linalg.norm(g))
    while gn > cfg.grad_tol and it < cfg.max_iter:
        it += 1
        direction = prob.newton_direction(g, soft, P)
        slope = float(g @ direction)
        if not slope > 0:
            direction, slope = g, gn * gn
        step = 1.0
        accepted = False
        while step > 1e-20:
            cand = w.copy()
            cand[prob.active] += step * direction
            cv, cg, cs, cf, cP = prob.evaluate(cand)
            if cv >= val + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        w, val, g, soft, fallback, P = cand, cv, cg, cs, cf, cP
        gn = float(np.linalg.norm(g))
        history.append(val)
    if prob.active.size:
        w[prob.active] -= w[prob.active[0]]
    converged = gn <= cfg.grad_tol
    full_soft = np.zeros(n)
    full_soft[prob.active] = soft
    res = EntropicResult(
        value=val,
        weights=DualWeights(w, "first_zero"),
        soft_masses=full_soft,
        grad_norm=gn,
        iterations=it,
        converged=converged,
        hard_min_fallback=fallback,
        potential_bound_exceeded=bool(np.abs(w).max() > _potential_bound(d, Y, cost)),
        history=history,
    )
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"entropic ascent stopped at gradient norm {gn:.3e} > {cfg.grad_tol:.3e} after {it} steps",
            report=res,
            iteration=it,
        )
    return res


DEFAULT_SWEEP = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)


@dataclass
class SweepReport:
    """Regularized losses along a decreasing ``epsilon`` sweep.

    ``shifted = value + epsilon`` is the regularized primal cost; it must not
    increase as epsilon shrinks and must approach the unregularized cost.
    """

    epsilons: np.ndarray
    values: np.ndarray
    shifted: np.ndarray
    transport_cost: float
    gap: float
    gap_bound: float
    monotone: bool
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone and self.gap <= self.gap_bound


def entropic_sweep(
    d: GridDensity,
    Y,
    epsilons: Sequence[float] = DEFAULT_SWEEP,
    cost: CostSpec = SQUARED_EUCLIDEAN,
    grad_tol: float = 1e-9,
    max_iter: int = 20000,
    slack: float = 1e-10,
) -> SweepReport:
    """Run the entropic dual over decreasing ``epsilons`` with warm starts.

    The limit is compared with ``solve_dual``; the allowed gap is
    ``5 * (largest cell mass + smallest epsilon)``.
    """
    eps = np.array(sorted(epsilons, reverse=True), dtype=float)
    Y = as_points(Y, d.dim)
    results, w = [], None
    for e in eps:
        r = entropic_semidiscrete(d, Y, cost, EntropicConfig(float(e), max_iter, grad_tol), w0=w)
        results.append(r)
        w = r.w
    vals = np.array([r.value for r in results])
    shifted = vals + eps
    rep = solve_dual(d, Y, cost, tie_weights(Y), SolverOptions())
    gap = abs(shifted[-1] - rep.value)
    return SweepReport(
        epsilons=eps,
        values=vals,
        shifted=shifted,
        transport_cost=rep.value,
        gap=gap,
        gap_bound=5.0 * (float(d.masses.max()) + float(eps[-1])),
        monotone=bool(np.all(np.diff(shifted) <= slack)),
        results=results,
    )
