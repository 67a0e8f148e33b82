"""Grid-discretized target densities.

A density is stored as piecewise-constant values on a regular grid, collocated
at cell centers. Every integral against the measure becomes a weighted sum over
cells, with weight ``values[k] * cell_volume``.

Array layout: ``values`` has shape ``shape`` and axis ``a`` runs along world
coordinate ``a``. Flattened quantities (``centers``, ``masses``) use C order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateMeasureError, PGMFormatError

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density ``f`` sampled at the cell centers of a regular grid.

    Parameters
    ----------
    origin : tuple of float
        Lower corner of the grid, world units.
    spacing : tuple of float
        Cell edge lengths (strictly positive).
    values : ndarray
        Nonnegative density values, shape = cells per axis.
    """

    origin: tuple
    spacing: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        origin = tuple(float(v) for v in np.atleast_1d(self.origin))
        spacing = tuple(float(v) for v in np.atleast_1d(self.spacing))
        if values.ndim not in (1, 2):
            raise ValueError(f"only 1-D and 2-D grids are supported, got {values.ndim}-D")
        if len(origin) != values.ndim or len(spacing) != values.ndim:
            raise ValueError("origin/spacing length must match the grid dimension")
        if any(not (h > 0 and math.isfinite(h)) for h in spacing):
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        if values.size == 0:
            raise ValueError("grid has no cells")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("density values must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centers, shape ``(size, dim)``, C order."""
        axes = [
            o + (np.arange(n) + 0.5) * h
            for o, h, n in zip(self.origin, self.spacing, self.shape)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        out = np.stack([m.ravel() for m in mesh], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def masses(self) -> np.ndarray:
        """Per-cell masses ``values * cell_volume``, flattened."""
        out = self.values.ravel() * self.cell_volume
        out.setflags(write=False)
        return out

    @cached_property
    def support(self) -> np.ndarray:
        """Flat indices of cells with positive density."""
        out = np.flatnonzero(self.masses > 0)
        out.setflags(write=False)
        return out

    def total_mass(self) -> float:
        return math.fsum(self.masses)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.spacing) * np.asarray(self.shape)

    def support_diameter(self) -> float:
        """Diagonal of the bounding box of the support cells."""
        idx = self.support
        if idx.size == 0:
            return 0.0
        pts = self.centers[idx]
        half = 0.5 * np.asarray(self.spacing)
        ext = (pts.max(axis=0) + half) - (pts.min(axis=0) - half)
        return float(np.sqrt(np.sum(ext**2)))

    def cell_index(self, points) -> np.ndarray:
        """Flat index of the cell containing each point, -1 outside the grid."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - self.lo) / np.asarray(self.spacing)
        ij = np.floor(rel).astype(int)
        inside = np.all((ij >= 0) & (ij < np.asarray(self.shape)), axis=1)
        flat = np.full(len(pts), -1, dtype=int)
        if inside.any():
            flat[inside] = np.ravel_multi_index(tuple(ij[inside].T), self.shape)
        return flat

    def in_support(self, points) -> np.ndarray:
        idx = self.cell_index(points)
        out = idx >= 0
        out[out] = self.masses[idx[out]] > 0
        return out

    def with_values(self, values) -> "GridDensity":
        return GridDensity(self.origin, self.spacing, values)

    def translated(self, shift) -> "GridDensity":
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.dim,))
        return GridDensity(tuple(np.asarray(self.origin) + shift), self.spacing, self.values)


def normalize(d: GridDensity) -> GridDensity:
    """Rescale to unit total mass.

    Returns ``d`` itself when it is already normalized to within ``MASS_TOL``,
    which makes the operation idempotent bit for bit.
    """
    total = d.total_mass()
    if not (total > 0) or not math.isfinite(total):
        raise DegenerateMeasureError(f"cannot normalize a density with total mass {total!r}")
    if abs(total - 1.0) <= MASS_TOL:
        return d
    return d.with_values(d.values / total)


def build_uniform_box(lo, hi, resolution) -> GridDensity:
    """Uniform probability density on the box ``[lo, hi]``."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    res = np.atleast_1d(np.asarray(resolution, dtype=int))
    if lo.shape != hi.shape:
        raise ValueError("lo and hi must have the same length")
    if res.size == 1 and lo.size > 1:
        res = np.repeat(res, lo.size)
    if res.shape != lo.shape:
        raise ValueError("resolution must match the box dimension")
    if np.any(hi <= lo):
        raise ValueError(f"box must have positive extent, got lo={lo}, hi={hi}")
    if np.any(res < 1):
        raise ValueError("resolution must be >= 1 on every axis")
    spacing = (hi - lo) / res
    volume = float(np.prod(hi - lo))
    values = np.full(tuple(res), 1.0 / volume)
    return normalize(GridDensity(tuple(lo), tuple(spacing), values))


class MixtureComponent(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    weight: float


def _gaussian_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    dim = mean.size
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance must be symmetric positive definite") from None
    z = np.linalg.solve(chol, (x - mean).T)
    maha = np.sum(z * z, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return np.exp(-0.5 * maha - 0.5 * (dim * math.log(2 * math.pi) + log_det))


def _as_components(components, dim) -> list:
    out = []
    for comp in components:
        if isinstance(comp, dict):
            mean, cov, weight = comp["mean"], comp["cov"], comp["weight"]
        else:
            mean, cov, weight = comp
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if mean.shape != (dim,) or cov.shape != (dim, dim):
            raise ValueError(f"component shapes do not match dimension {dim}")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        if not weight > 0:
            raise ValueError(f"mixture weights must be positive, got {weight}")
        out.append(MixtureComponent(mean, cov, float(weight)))
    if not out:
        raise ValueError("mixture needs at least one component")
    return out


def build_disk_mixture(center, radius, components, resolution, window=None) -> GridDensity:
    """Gaussian mixture truncated to a disk (an interval in 1-D).

    The grid covers the disk's bounding box unless ``window=(lo, hi)`` is
    given. Cells whose center lies outside the closed disk get density zero.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    dim = center.size
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    comps = _as_components(components, dim)
    if window is None:
        lo, hi = center - radius, center + radius
    else:
        lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in window)
    res = np.atleast_1d(np.asarray(resolution, dtype=int))
    if res.size == 1:
        res = np.repeat(res, dim)
    grid = GridDensity(tuple(lo), tuple((hi - lo) / res), np.ones(tuple(res)))
    x = grid.centers
    total_w = sum(c.weight for c in comps)
    f = np.zeros(len(x))
    for c in comps:
        f += (c.weight / total_w) * _gaussian_pdf(x, c.mean, c.cov)
    f[np.sum((x - center) ** 2, axis=1) > radius**2] = 0.0
    if not np.any(f > 0) or math.fsum(f) * grid.cell_volume < 1e-300:
        raise DegenerateMeasureError("mixture has numerically zero mass on the disk")
    return normalize(grid.with_values(f.reshape(grid.shape)))


FIG1_COMPONENTS = (
    ((-0.35, 0.25), ((0.06, 0.0), (0.0, 0.09)), 0.6),
    ((0.4, -0.3), ((0.05, 0.02), (0.02, 0.08)), 0.4),
)


def fig1_mixture(resolution=128) -> GridDensity:
    """Two-component Gaussian mixture truncated on the unit disk."""
    return build_disk_mixture((0.0, 0.0), 1.0, FIG1_COMPONENTS, resolution)


class RegionStats(NamedTuple):
    mass: float
    barycenter: np.ndarray
    empty: bool


def region_stats(d: GridDensity, mask) -> RegionStats:
    """Mass and barycenter of the cells selected by ``mask``.

    ``mask`` is a boolean array (flat or grid-shaped) or a callable taking the
    ``(size, dim)`` cell centers and returning one. Sums are exact (``fsum``),
    so the result does not depend on accumulation order. An empty or
    zero-mass region returns ``empty=True`` and a NaN barycenter.
    """
    if callable(mask):
        mask = mask(d.centers)
    sel = np.asarray(mask, dtype=bool).ravel()
    if sel.size != d.size:
        raise ValueError(f"mask has {sel.size} entries, grid has {d.size} cells")
    idx = np.flatnonzero(sel)
    m = d.masses[idx]
    mass = math.fsum(m)
    if mass == 0.0:
        return RegionStats(0.0, np.full(d.dim, np.nan), True)
    pts = d.centers[idx]
    bary = np.array([math.fsum(m * pts[:, a]) for a in range(d.dim)]) / mass
    return RegionStats(mass, bary, False)


def sample_points(d: GridDensity, n: int, seed=0) -> np.ndarray:
    """Draw ``n`` i.i.d. points from the piecewise-constant density.

    A cell is picked by inverse CDF over the flattened masses, then the point
    is uniform inside that cell.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(d.masses)
    u = rng.random(n) * cdf[-1]
    k = np.minimum(np.searchsorted(cdf, u, side="right"), d.size - 1)
    jitter = rng.random((n, d.dim)) - 0.5
    return d.centers[k] + jitter * np.asarray(d.spacing)


def _pgm_tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PGMFormatError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode a P2 or P5 PGM into an integer array of shape (height, width)."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMFormatError(f"unsupported magic number {magic!r}")
    try:
        tokens, pos = _pgm_tokens(data, 3, 2)
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise PGMFormatError(f"bad PGM header: {exc}") from None
    if width < 1 or height < 1:
        raise PGMFormatError(f"image must have at least one pixel, got {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PGMFormatError(f"maxval must be in [1, 65535], got {maxval}")
    n = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + n * dtype.itemsize]
        if len(raw) < n * dtype.itemsize:
            raise PGMFormatError("truncated P5 raster")
        pix = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    else:
        body = b"\n".join(line.split(b"#", 1)[0] for line in data[pos:].splitlines())
        fields = body.split()
        if len(fields) != n:
            raise PGMFormatError(f"expected {n} pixel values, found {len(fields)}")
        try:
            pix = np.array([int(f) for f in fields], dtype=np.int64)
        except ValueError:
            raise PGMFormatError("non-integer pixel value in P2 raster") from None
    if np.any(pix < 0) or np.any(pix > maxval):
        raise PGMFormatError("pixel value outside [0, maxval]")
    return pix.reshape(height, width)


def density_from_image(pixels) -> GridDensity:
    """Image rows/columns -> grid on ``[0, W) x [0, H)`` with unit spacing.

    World x is the column index and world y the row index (image convention,
    y pointing down).
    """
    pix = np.asarray(pixels, dtype=float)
    if pix.ndim != 2:
        raise ValueError("image must be 2-D")
    values = pix.T.copy()
    grid = GridDensity((0.0, 0.0), (1.0, 1.0), values)
    if grid.total_mass() == 0.0:
        raise DegenerateMeasureError("all-zero image cannot be normalized")
    return normalize(grid)


def load_pgm(path) -> GridDensity:
    """Load a PGM (P2 or P5) image as a normalized piecewise-constant density."""
    data = Path(path).read_bytes()
    return density_from_image(parse_pgm(data))


def write_pgm(path, pixels, maxval=None, binary=True) -> None:
    """Write a (height, width) integer array as PGM."""
    pix = np.asarray(pixels, dtype=np.int64)
    if maxval is None:
        maxval = max(1, int(pix.max()))
    h, w = pix.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode()
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        body = pix.astype(dtype).tobytes()
    else:
        body = ("\n".join(" ".join(str(v) for v in row) for row in pix) + "\n").encode()
    Path(path).write_bytes(header + body)


def coarsen(d: GridDensity, factor: Sequence[int] | int) -> GridDensity:
    """Merge blocks of ``factor`` cells per axis, preserving mass."""
    f = np.broadcast_to(np.atleast_1d(np.asarray(factor, dtype=int)), (d.dim,))
    if np.any(np.asarray(d.shape) % f):
        raise ValueError("grid shape must be divisible by the coarsening factor")
    shape = tuple(int(n // k) for n, k in zip(d.shape, f))
    blocks = d.values.reshape(tuple(x for pair in zip(shape, f) for x in pair))
    vals = blocks.mean(axis=tuple(range(1, 2 * d.dim, 2)))
    spacing = tuple(h * k for h, k in zip(d.spacing, f))
    return GridDensity(d.origin, spacing, vals)
