"""Trace CSV, result JSON and SVG rendering."""

from __future__ import annotations

import colorsys
import csv
import json
import math
from pathlib import Path

import numpy as np

from .density import GridDensity
from .lloyd import TRACE_FIELDS, SolverTrace

SCHEMA = 1


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_trace_csv(path, trace: SolverTrace | None) -> None:
    """Fixed header, one row per outer iteration; floats are written with ``repr``."""
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_FIELDS)
        for row in trace.rows if trace is not None else ():
            out.writerow([_cell(v) for v in row.csv_values()])


def jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_result_json(path, result: dict) -> None:
    payload = {"schema": SCHEMA, **result}
    text = json.dumps(jsonable(payload), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_result_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _color(label: int) -> str:
    h = (label * 0.618033988749895) % 1.0
    r, g, b = colorsys.hls_to_rgb(h, 0.78, 0.55)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def render_svg(path, d: GridDensity, labels, points, masses, size: int = 512) -> None:
    """Label raster as run-length rectangles plus one dot per point.

    Dot diameters are proportional to the point masses. One-dimensional
    densities are drawn as a strip. The y axis points up.
    """
    grid = np.asarray(labels).reshape(d.shape)
    pts = np.asarray(points, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if d.dim == 1:
        grid = grid[:, None]
        pts = np.column_stack([pts[:, 0], np.full(len(pts), 0.5)])
        lo = np.array([d.lo[0], 0.0])
        ext = np.array([d.hi[0] - d.lo[0], 1.0])
    else:
        lo, ext = d.lo, d.hi - d.lo
    nx, ny = grid.shape
    scale = size / float(ext.max())
    W, H = ext * scale
    cw, ch = W / nx, H / ny
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.2f}" height="{H:.2f}" '
        f'viewBox="0 0 {W:.2f} {H:.2f}" shape-rendering="crispEdges">',
        f'<rect x="0" y="0" width="{W:.2f}" height="{H:.2f}" fill="#ffffff"/>',
    ]
    for j in range(ny):
        col = grid[:, j]
        y = H - (j + 1) * ch
        start = 0
        for i in range(1, nx + 1):
            if i == nx or col[i] != col[start]:
                if col[start] >= 0:
                    parts.append(
                        f'<rect x="{start * cw:.3f}" y="{y:.3f}" width="{(i - start) * cw:.3f}" '
                        f'height="{ch:.3f}" fill="{_color(int(col[start]))}"/>'
                    )
                start = i
    mmax = masses.max() if masses.size and masses.max() > 0 else 1.0
    for p, m in zip(pts, masses):
        cx = (p[0] - lo[0]) * scale
        cy = H - (p[1] - lo[1]) * scale
        r = max(0.5, 0.5 * 0.04 * size * m / mmax)
        parts.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{r:.3f}" fill="#1f4fd8"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
