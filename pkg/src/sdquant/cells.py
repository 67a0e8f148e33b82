"""Voronoi / power partitions of a grid density and the tie weights.

Cells are assigned by brute force: each grid cell center goes to the argmin of
``c(x, y_i) - w_i`` over active points, lowest index on exact ties. Boundary
cells are never split.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cost import SQUARED_EUCLIDEAN, CostSpec, squared_distances
from .density import GridDensity, write_pgm
from .errors import DiagonalError


def as_points(Y, dim=None) -> np.ndarray:
    """Coerce to a float ``(N, dim)`` array; a flat vector is read as 1-D points."""
    arr = np.asarray(Y, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2 or len(arr) < 1:
        raise ValueError(f"expected an (N, d) point array, got shape {np.shape(Y)}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"points have dimension {arr.shape[1]}, density has {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """N support points in R^dim."""

    points: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def on_diagonal(self) -> bool:
        return on_diagonal(self.points)

    def tie_weights(self) -> np.ndarray:
        return tie_weights(self.points)


def _equal_rows(Y: np.ndarray) -> np.ndarray:
    return np.all(Y[:, None, :] == Y[None, :, :], axis=2)


def on_diagonal(Y) -> bool:
    """True iff two points coincide exactly."""
    Y = as_points(Y)
    eq = _equal_rows(Y)
    np.fill_diagonal(eq, False)
    return bool(eq.any())


def tie_weights(Y) -> np.ndarray:
    """Merged Dirac weights: each group of equal points puts its mass on its first index.

    Off the diagonal every entry is 1/N.
    """
    Y = as_points(Y)
    n = len(Y)
    eq = _equal_rows(Y)
    first = np.argmax(eq, axis=1)  # first index equal to row i
    lam = np.zeros(n)
    counts = np.bincount(first, minlength=n)
    leaders = first == np.arange(n)
    lam[leaders] = counts[leaders] / n
    return lam


@dataclass(frozen=True, eq=False)
class CellPartition:
    """Per-grid-cell labels plus per-region statistics.

    ``labels`` is flat (C order) with -1 on zero-density cells. Stats are
    indexed by point: ``masses[i]``, ``barycenters[i]`` (NaN if empty) and
    ``second_moments[i] = sum over region of m_k ||x_k - y_i||^2``.
    """

    labels: np.ndarray
    masses: np.ndarray
    barycenters: np.ndarray
    second_moments: np.ndarray
    points: np.ndarray
    grid_shape: tuple

    @property
    def n_regions(self) -> int:
        return len(self.masses)

    def empty_regions(self, active=None) -> np.ndarray:
        empty = self.masses <= 0
        if active is not None:
            empty &= active
        return np.flatnonzero(empty)

    def label_grid(self) -> np.ndarray:
        return self.labels.reshape(self.grid_shape)


def _assign(d: GridDensity, scores: np.ndarray) -> np.ndarray:
    labels = np.full(d.size, -1, dtype=np.int64)
    labels[d.support] = np.argmin(scores, axis=1)
    return labels


def partition_stats(d: GridDensity, Y: np.ndarray, labels: np.ndarray, sqd=None) -> CellPartition:
    """Region masses, barycenters and second moments for a label array.

    ``sqd`` optionally supplies the (support x N) squared distances.
    """
    n, dim = Y.shape
    idx = d.support
    lab = labels[idx]
    m = d.masses[idx]
    x = d.centers[idx]
    masses = np.bincount(lab, weights=m, minlength=n)
    first = np.stack([np.bincount(lab, weights=m * x[:, a], minlength=n) for a in range(dim)], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        bary = np.where(masses[:, None] > 0, first / masses[:, None], np.nan)
    if sqd is None:
        diff = x - Y[lab]
        own = np.sum(diff * diff, axis=1)
    else:
        own = sqd[np.arange(len(lab)), lab]
    second = np.bincount(lab, weights=m * own, minlength=n)
    return CellPartition(labels, masses, bary, second, Y.copy(), d.shape)


def voronoi_partition(d: GridDensity, Y, merge_ties: bool = False) -> CellPartition:
    """Nearest-point partition of the grid cells.

    Points on the generalized diagonal raise ``DiagonalError`` unless
    ``merge_ties`` is set, in which case only the first point of each
    coincident group receives cells.
    """
    Y = as_points(Y, d.dim)
    lam = tie_weights(Y)
    if np.any(lam == 0) and not merge_ties:
        raise DiagonalError("points coincide; pass merge_ties=True to merge duplicates")
    sqd = squared_distances(d.centers[d.support], Y)
    scores = sqd
    if np.any(lam == 0):
        scores = np.where(lam > 0, sqd, np.inf)
    return partition_stats(d, Y, _assign(d, scores), sqd)


def power_partition(d: GridDensity, Y, w, cost: CostSpec = SQUARED_EUCLIDEAN, target=None) -> CellPartition:
    """Laguerre partition: argmin over active i of ``c(x, y_i) - w_i``.

    Active indices are those with positive ``target`` weight (tie weights of Y
    by default); weights of inactive indices are ignored.
    """
    Y = as_points(Y, d.dim)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != (len(Y),):
        raise ValueError(f"need {len(Y)} weights, got {w.shape}")
    lam = tie_weights(Y) if target is None else np.asarray(target, dtype=float)
    C = cost.matrix(d.centers[d.support], Y)
    scores = C - w
    if np.any(lam <= 0):
        scores = np.where(lam > 0, scores, np.inf)
    sqd = C if cost.is_squared_euclidean else None
    return partition_stats(d, Y, _assign(d, scores), sqd)


def write_label_pgm(path, partition: CellPartition) -> None:
    """Label raster as PGM: 0 = unassigned, region i -> i + 1.

    Only 2-D grids; rows are the y axis, matching ``load_pgm``.
    """
    grid = partition.label_grid()
    if grid.ndim == 1:
        grid = grid[:, None]
    write_pgm(path, (grid + 1).T, maxval=max(1, partition.n_regions))


STATS_HEADER = ("index", "mass", "barycenter", "second_moment", "point")


def write_region_stats_csv(path, partition: CellPartition) -> None:
    """One row per region; vector fields are space-separated coordinates."""

    def vec(v):
        return " ".join(repr(float(c)) for c in v)

    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(STATS_HEADER)
        for i in range(partition.n_regions):
            out.writerow(
                [
                    i,
                    repr(float(partition.masses[i])),
                    vec(partition.barycenters[i]),
                    repr(float(partition.second_moments[i])),
                    vec(partition.points[i]),
                ]
            )
