"""File outputs: flow CSV, report JSON and quiver SVG."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from beckmann.assembly import ProblemData
from beckmann.flow import ArrowField, FlowField, downsample
from beckmann.mesh import Mesh

CSV_HEADER = ["triangle_id", "cx", "cy", "qx", "qy"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _ensure_parent(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_flow_csv(flow: FlowField, path) -> Path:
    """One row per triangle: id, centroid and flux vector, 17 significant digits."""
    path = _ensure_parent(path)
    cent = flow.mesh.centroids
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for t in range(flow.mesh.n_triangles):
            writer.writerow([t, _fmt(cent[t, 0]), _fmt(cent[t, 1]), _fmt(flow.q[t, 0]), _fmt(flow.q[t, 1])])
    return path


def read_flow_csv(path, mesh: Mesh) -> FlowField:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [(int(r[0]), float(r[3]), float(r[4])) for r in reader]
    q = np.zeros((mesh.n_triangles, 2))
    if len(rows) != mesh.n_triangles:
        raise ValueError(f"{path}: {len(rows)} rows for a mesh with {mesh.n_triangles} triangles")
    for t, qx, qy in rows:
        q[t] = qx, qy
    return FlowField(q, mesh)


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(data: dict, path) -> Path:
    path = _ensure_parent(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_report_json(report: dict, path) -> Path:
    """Write a run report (see :func:`beckmann.studies.run_report`).

    Floats are written with ``repr`` precision, so the file is bit-reproducible
    for bit-identical runs.
    """
    return write_json(report, path)


def _gray(level: float) -> str:
    """Hex gray for ``level`` in [0, 1]; 1 is the darkest shade."""
    v = int(round(255 * (1.0 - 0.75 * level)))
    return f"#{v:02x}{v:02x}{v:02x}"


def write_quiver_svg(
    flow: FlowField,
    problem: ProblemData,
    path,
    *,
    width_px: int = 600,
    title: str | None = None,
    arrows: ArrowField | None = None,
) -> Path:
    """Grayscale cost background (darker is costlier) with block-averaged flow arrows.

    Arrows are scaled per figure so the longest one spans 90% of a block; the
    scale factor is stored in the ``<metadata>`` element.
    """
    mesh = flow.mesh
    arrows = downsample(flow, mesh) if arrows is None else arrows
    dom = mesh.domain
    px = width_px / dom.width
    height_px = dom.height * px

    def X(x):
        return (x - dom.x0) * px

    def Y(y):
        return height_px - (y - dom.y0) * px

    w = problem.w
    span = float(w.max() - w.min())
    levels = (w - w.min()) / span if span > 0 else np.zeros_like(w)
    block_px = 2 * min(mesh.hx, mesh.hy) * px
    scale = 0.9 * block_px / arrows.max_norm if arrows.max_norm > 0 else 0.0

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px:.3f}" '
        f'viewBox="0 0 {width_px} {height_px:.3f}">',
        "<metadata>"
        + json.dumps(
            {"arrow_scale_px_per_unit": scale, "max_norm": arrows.max_norm, "n_arrows": arrows.n_arrows},
            sort_keys=True,
        )
        + "</metadata>",
        '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto">'
        '<path d="M0,0 L6,3 L0,6 z" fill="#1f4fbf"/></marker></defs>',
    ]
    if title:
        out.append(f"<title>{title}</title>")
    out.append('<g class="cost" shape-rendering="crispEdges">')
    cw, ch = mesh.hx * px, mesh.hy * px
    for s in range(mesh.n_squares):
        i, j = s % mesh.nx, s // mesh.nx
        x0 = X(dom.x0 + i * mesh.hx)
        y0 = Y(dom.y0 + (j + 1) * mesh.hy)
        out.append(
            f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{cw:.3f}" height="{ch:.3f}" fill="{_gray(levels[s])}"/>'
        )
    out.append("</g>")
    out.append('<g class="flow" stroke="#1f4fbf" stroke-width="1.2">')
    for (cx, cy), (vx, vy) in zip(arrows.centers[arrows.keep], arrows.vectors[arrows.keep]):
        x1, y1 = X(cx) - 0.5 * scale * vx, Y(cy) + 0.5 * scale * vy
        x2, y2 = X(cx) + 0.5 * scale * vx, Y(cy) - 0.5 * scale * vy
        out.append(
            f'<line class="arrow" x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" marker-end="url(#head)"/>'
        )
    out.append("</g>")
    out.append("</svg>")
    path = _ensure_parent(path)
    path.write_text("\n".join(out) + "\n")
    return path
