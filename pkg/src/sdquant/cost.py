"""Transport costs c(x, y) evaluated between grid cells and support points."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_CHUNK = 1 << 15


def thread_count() -> int:
    """Worker cap from ``QUANT_THREADS`` (default: up to 4 cores)."""
    env = os.environ.get("QUANT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


def _rowwise(fn, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Evaluate ``fn(X_chunk, Y)`` over row chunks of X into one array.

    Chunks write to disjoint slices, so the result is identical for any
    number of workers.
    """
    out = np.empty((len(X), len(Y)))
    bounds = [(s, min(s + _CHUNK, len(X))) for s in range(0, len(X), _CHUNK)]

    def run(b):
        out[b[0] : b[1]] = fn(X[b[0] : b[1]], Y)

    workers = thread_count()
    if workers == 1 or len(bounds) == 1:
        for b in bounds:
            run(b)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, bounds))
    return out


def _sqdist(X, Y):
    out = np.zeros((len(X), len(Y)))
    for a in range(X.shape[1]):
        diff = X[:, a, None] - Y[None, :, a]
        out += diff * diff
    return out


def squared_distances(X, Y) -> np.ndarray:
    """``||x_k - y_i||^2`` as a (K, N) matrix, summed axis by axis."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return _rowwise(_sqdist, X, Y)


@dataclass(frozen=True)
class CostSpec:
    """Cost function family.

    kind : ``"squared_euclidean"``, ``"p_power"`` (``||x-y||^p``, p >= 1) or
    ``"custom"`` (``evaluator(x, y) -> float``). A custom evaluator flagged
    ``vectorized`` receives ``(K, d)`` cells and one ``(d,)`` point and must
    return ``(K,)`` costs.
    """

    kind: str = "squared_euclidean"
    p: float = 2.0
    evaluator: Optional[Callable] = None
    vectorized: bool = False

    def __post_init__(self):
        if self.kind not in ("squared_euclidean", "p_power", "custom"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.kind == "p_power" and not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.kind == "custom" and self.evaluator is None:
            raise ValueError("custom cost needs an evaluator")

    @property
    def is_squared_euclidean(self) -> bool:
        return self.kind == "squared_euclidean"

    def matrix(self, X, Y) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if self.kind == "squared_euclidean":
            return squared_distances(X, Y)
        if self.kind == "p_power":
            p = self.p
            return _rowwise(lambda a, b: np.sqrt(_sqdist(a, b)) ** p, X, Y)
        fn = self.evaluator
        out = np.empty((len(X), len(Y)))
        for i, y in enumerate(Y):
            if self.vectorized:
                out[:, i] = fn(X, y)
            else:
                out[:, i] = [fn(x, y) for x in X]
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise ValueError("custom cost must be finite and nonnegative")
        return out

    def __call__(self, x, y) -> float:
        return float(self.matrix(np.atleast_2d(x), np.atleast_2d(y))[0, 0])


SQUARED_EUCLIDEAN = CostSpec()
