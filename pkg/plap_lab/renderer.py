"""Renderer for plap-lab artifacts.

Turns fields and reports into files a reader can inspect:
- field tables (pandas frames, one row per node or per lattice cell)
- SVG line plots of 1D branches with their barriers
- SVG heatmaps of 2D nodal fields
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape

from .mesh_domain import Mesh

TEMPLATES_DIR = Path(__file__).parent / "templates"

WIDTH = 720
HEIGHT = 420
MARGIN = 60
LEGEND = 120

COLORS = {
    "u1": "#1f77b4",
    "u2": "#d62728",
    "u_lo": "#2ca02c",
    "u_hi": "#9467bd",
}


def _get_jinja_env() -> Environment:
    """Create a Jinja2 environment with the templates directory."""
    return Environment(
        loader=FileSystemLoader(str(TEMPLATES_DIR)),
        autoescape=select_autoescape(["svg", "svg.jinja"]),
        keep_trailing_newline=True,
    )


def fields_frame(mesh: Mesh, fields: dict[str, np.ndarray]) -> pd.DataFrame:
    """``node_id, x[, y]`` followed by one column per named nodal field."""
    data: dict[str, np.ndarray] = {"node_id": np.arange(mesh.n_nodes)}
    for axis, name in zip(range(mesh.dimension), ("x", "y")):
        data[name] = mesh.coords[:, axis]
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_nodes,):
            raise ValueError(f"field {name!r} does not match the mesh")
        data[name] = values
    return pd.DataFrame(data)


def grid_frame(mesh: Mesh, values: np.ndarray) -> pd.DataFrame:
    """A 2D nodal field as a lattice table: one row per y level, one column per x level."""
    if mesh.dimension != 2:
        raise ValueError("grid tables need a 2D mesh")
    grid = np.asarray(values, dtype=float).reshape(mesh.grid_shape)
    nx, ny = mesh.divisions
    columns = [f"x={i / nx:.6f}" for i in range(nx + 1)]
    frame = pd.DataFrame(grid, columns=columns)
    frame.insert(0, "y", np.arange(ny + 1) / ny)
    return frame


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _polyline(x: np.ndarray, y: np.ndarray, y_min: float, y_max: float) -> str:
    left, right = MARGIN, WIDTH - MARGIN - LEGEND
    top, bottom = MARGIN, HEIGHT - MARGIN
    span = y_max - y_min or 1.0
    px = left + x * (right - left)
    py = bottom - (y - y_min) / span * (bottom - top)
    return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))


def render_line_plot(
    mesh: Mesh,
    series: Sequence[tuple[str, np.ndarray, str, bool]],
    title: str,
) -> str:
    """SVG of nodal fields against x on a 1D mesh.

    Args:
        mesh: A 1D mesh.
        series: ``(label, values, color, dashed)`` per curve.
        title: Plot heading.

    Returns:
        Self-contained SVG text.
    """
    if mesh.dimension != 1:
        raise ValueError("line plots need a 1D mesh")
    x = mesh.coords[:, 0]
    stacked = np.concatenate([np.asarray(s[1], dtype=float) for s in series] + [np.zeros(1)])
    y_min, y_max = float(stacked.min()), float(stacked.max())
    span = y_max - y_min or 1.0
    zero_y = HEIGHT - MARGIN - (0.0 - y_min) / span * (HEIGHT - 2 * MARGIN)
    data: dict[str, Any] = {
        "title": title,
        "width": WIDTH,
        "height": HEIGHT,
        "left": MARGIN,
        "right": WIDTH - MARGIN - LEGEND,
        "top": MARGIN,
        "bottom": HEIGHT - MARGIN,
        "zero_y": _fmt(zero_y),
        "y_min": f"{y_min:.4g}",
        "y_max": f"{y_max:.4g}",
        "series": [
            {
                "label": label,
                "points": _polyline(x, np.asarray(values, dtype=float), y_min, y_max),
                "color": color,
                "dashed": dashed,
                "width": 1 if dashed else 2,
            }
            for label, values, color, dashed in series
        ],
    }
    return _get_jinja_env().get_template("line_plot.svg.jinja").render(**data)


def branch_series(
    fields: tuple[np.ndarray, np.ndarray],
    u_lo: tuple[np.ndarray, np.ndarray],
    u_hi: tuple[np.ndarray, np.ndarray],
) -> list[tuple[str, np.ndarray, str, bool]]:
    """u1, u2 and the barriers +-u_lo, +-u_hi of both components."""
    out = [
        ("u1", fields[0], COLORS["u1"], False),
        ("u2", fields[1], COLORS["u2"], False),
    ]
    for i in range(2):
        for sign, prefix in ((1.0, ""), (-1.0, "-")):
            out.append((f"{prefix}u_lo{i + 1}", sign * u_lo[i], COLORS["u_lo"], True))
            out.append((f"{prefix}u_hi{i + 1}", sign * u_hi[i], COLORS["u_hi"], True))
    return out


def _diverging(t: float) -> str:
    """White at 0, red towards +1, blue towards -1."""
    t = max(-1.0, min(1.0, t))
    fade = int(round(255 * (1.0 - abs(t))))
    if t >= 0.0:
        return f"#ff{fade:02x}{fade:02x}"
    return f"#{fade:02x}{fade:02x}ff"


def render_heatmap(mesh: Mesh, values: np.ndarray, title: str) -> str:
    """SVG raster of a 2D nodal field, one cell per lattice node, y pointing up."""
    if mesh.dimension != 2:
        raise ValueError("heatmaps need a 2D mesh")
    grid = np.asarray(values, dtype=float).reshape(mesh.grid_shape)
    rows, cols = grid.shape
    size = min(WIDTH, HEIGHT) - 2 * MARGIN
    cell_w, cell_h = size / cols, size / rows
    scale = float(np.abs(grid).max()) or 1.0
    cells = [
        {
            "x": _fmt(MARGIN + i * cell_w),
            "y": _fmt(MARGIN + (rows - 1 - j) * cell_h),
            "fill": _diverging(grid[j, i] / scale),
        }
        for j in range(rows)
        for i in range(cols)
    ]
    data = {
        "title": title,
        "width": size + 2 * MARGIN,
        "height": size + 2 * MARGIN,
        "left": MARGIN,
        "right": size + MARGIN,
        "cell_w": _fmt(cell_w + 0.01),
        "cell_h": _fmt(cell_h + 0.01),
        "cells": cells,
        "v_min": f"{float(grid.min()):.4g}",
        "v_max": f"{float(grid.max()):.4g}",
    }
    return _get_jinja_env().get_template("heatmap.svg.jinja").render(**data)
