"""Deterministic artifact emission: CSV tables, flat binary fields, SVG plots.

All writers format floats with repr-exact precision and iterate in fixed
order, so identical inputs yield identical bytes.
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .graph import GraphSolution
from .mesh import VoxelJunctionMesh

__all__ = [
    "write_graph_csv",
    "write_vertex_trace_csv",
    "write_convergence_csv",
    "write_field_binary",
    "read_field_binary",
    "write_json",
    "write_loglog_svg",
]

_MAGIC = b"SJF1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_graph_csv(path: str | Path, sol: GraphSolution) -> None:
    """Edge fields as rows of (t, edge, x, value)."""
    lines = ["t,edge,x,value"]
    for m, t in enumerate(sol.times):
        for field in sol.fields:
            for x, v in zip(field.grid.centers, field.values[m]):
                lines.append(f"{_fmt(t)},{field.edge_index},{_fmt(x)},{_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_vertex_trace_csv(path: str | Path, sol: GraphSolution) -> None:
    lines = ["t,value,flux1,flux2,flux3,residual"]
    res = sol.vertex_residuals
    for m, t in enumerate(sol.times):
        r = 0.0 if res is None else float(res[m])
        f = sol.vertex_fluxes[m]
        lines.append(",".join([_fmt(t), _fmt(sol.vertex_values[m, 0]),
                               _fmt(f[0]), _fmt(f[1]), _fmt(f[2]), _fmt(r)]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_convergence_csv(path: str | Path, rows: list[dict]) -> None:
    cols = ["epsilon", "maxL2", "L2H1", "nodeGrad", "mu", "order_running"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c, float("nan"))) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def write_field_binary(path: str | Path, mesh: VoxelJunctionMesh,
                       values: np.ndarray) -> None:
    """Dense row-major float64 dump over the bounding box (NaN outside the
    domain) with a small header: magic, dims, voxel size, origin."""
    h = mesh.hv
    lo = mesh.centers.min(axis=0) - 0.5 * h
    hi = mesh.centers.max(axis=0) + 0.5 * h
    dims = np.round((hi - lo) / h).astype(np.int64)
    dense = np.full(tuple(dims), np.nan)
    g = np.floor((mesh.centers - lo) / h + 0.5 - 1e-9).astype(int)
    dense[g[:, 0], g[:, 1], g[:, 2]] = values
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3q", *dims))
        fh.write(struct.pack("<d", h))
        fh.write(struct.pack("<3d", *lo))
        fh.write(dense.astype("<f8").tobytes(order="C"))


def read_field_binary(path: str | Path):
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a field file")
    dims = struct.unpack("<3q", raw[4:28])
    hv = struct.unpack("<d", raw[28:36])[0]
    origin = struct.unpack("<3d", raw[36:60])
    data = np.frombuffer(raw[60:], dtype="<f8").reshape(dims)
    return dims, hv, origin, data


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True,
                                     default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)}")


# ---------------------------------------------------------------------------
# hermetic SVG log-log plots
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _decades(lo: float, hi: float):
    start = math.floor(math.log10(lo))
    stop = math.ceil(math.log10(hi))
    return [10.0 ** k for k in range(start, stop + 1)]


def write_loglog_svg(path: str | Path, x: list[float], series: dict,
                     xlabel: str = "epsilon", ylabel: str = "error",
                     title: str = "") -> None:
    """Minimal log-log polyline plot of several series over common x values."""
    width, height = 640, 480
    ml, mr, mt, mb = 70, 160, 40, 55
    xs = [float(v) for v in x]
    all_y = [float(v) for vals in series.values() for v in vals if v > 0.0]
    if not xs or not all_y:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs) / 1.3, max(xs) * 1.3
    y_lo, y_hi = min(all_y) / 1.5, max(all_y) * 1.5

    def px(v):
        return ml + (math.log10(v) - math.log10(x_lo)) / \
            (math.log10(x_hi) - math.log10(x_lo)) * (width - ml - mr)

    def py(v):
        return height - mb - (math.log10(v) - math.log10(y_lo)) / \
            (math.log10(y_hi) - math.log10(y_lo)) * (height - mt - mb)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" '
                     f'font-size="15" font-family="sans-serif">{title}</text>')
    # axes frame and decade grid
    parts.append(f'<rect x="{ml}" y="{mt}" width="{width - ml - mr}" '
                 f'height="{height - mt - mb}" fill="none" stroke="#333"/>')
    for v in _decades(x_lo, x_hi):
        if x_lo <= v <= x_hi:
            parts.append(f'<line x1="{px(v):.1f}" y1="{mt}" x2="{px(v):.1f}" '
                         f'y2="{height - mb}" stroke="#ddd"/>')
            parts.append(f'<text x="{px(v):.1f}" y="{height - mb + 18}" '
                         f'text-anchor="middle" font-size="11" '
                         f'font-family="sans-serif">1e{int(math.log10(v))}</text>')
    for v in _decades(y_lo, y_hi):
        if y_lo <= v <= y_hi:
            parts.append(f'<line x1="{ml}" y1="{py(v):.1f}" x2="{width - mr}" '
                         f'y2="{py(v):.1f}" stroke="#ddd"/>')
            parts.append(f'<text x="{ml - 8}" y="{py(v) + 4:.1f}" text-anchor="end" '
                         f'font-size="11" font-family="sans-serif">'
                         f'1e{int(math.log10(v))}</text>')
    parts.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 12}" '
                 f'text-anchor="middle" font-size="13" '
                 f'font-family="sans-serif">{xlabel}</text>')
    parts.append(f'<text x="18" y="{(mt + height - mb) / 2:.1f}" font-size="13" '
                 f'font-family="sans-serif" transform="rotate(-90 18 '
                 f'{(mt + height - mb) / 2:.1f})" text-anchor="middle">{ylabel}</text>')
    for idx, (name, vals) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = [(px(xv), py(yv)) for xv, yv in zip(xs, vals) if yv > 0.0]
        if not pts:
            continue
        poly = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
        parts.append(f'<polyline points="{poly}" fill="none" stroke="{color}" '
                     f'stroke-width="1.8"/>')
        for a, b in pts:
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3.2" fill="{color}"/>')
        ly = mt + 16 + 18 * idx
        parts.append(f'<line x1="{width - mr + 12}" y1="{ly}" x2="{width - mr + 34}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - mr + 40}" y="{ly + 4}" font-size="12" '
                     f'font-family="sans-serif">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
