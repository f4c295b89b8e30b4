"""Self-contained SVG rendering: trajectories, angular diagrams, potential heatmaps."""
from __future__ import annotations

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
           "#bcbd22", "#7f7f7f"]


def _header(w, h):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>']


def _fmt(x):
    return f"{x:.2f}"


class _Box:
    """Affine map from data coordinates into a square plot area."""

    def __init__(self, pts, size=500, pad=40):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2) if len(pts) else np.zeros((0, 2))
        if len(pts) == 0:
            lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
        else:
            lo, hi = pts.min(0), pts.max(0)
        span = max(float((hi - lo).max()), 1e-12)
        self.c = 0.5 * (lo + hi)
        self.s = (size - 2 * pad) / span
        self.size, self.pad = size, pad

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        x = self.size / 2 + (p[..., 0] - self.c[0]) * self.s
        y = self.size / 2 - (p[..., 1] - self.c[1]) * self.s
        return x, y


def _axes(box):
    s, pad = box.size, box.pad
    return [f'<line x1="{pad}" y1="{s - pad}" x2="{s - pad}" y2="{s - pad}" stroke="black"/>',
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{s - pad}" stroke="black"/>',
            f'<text x="{s / 2}" y="{s - 10}" font-size="12" text-anchor="middle">u</text>',
            f'<text x="12" y="{s / 2}" font-size="12">v</text>']


def _polyline(box, uv, color, width=1.0):
    x, y = box(uv)
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(x, y))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def trajectories_svg(curves, strips=None, size: int = 500, max_points: int = 4000) -> str:
    """Polylines in the (u, v) plane frame.

    `strips` is an optional list (same length) of (direction, width) or None;
    each given strip is drawn as its two boundary lines.
    """
    curves = [np.asarray(c, dtype=float) for c in curves]
    allpts = np.concatenate(curves) if curves else np.zeros((0, 2))
    box = _Box(allpts, size)
    out = _header(size, size) + _axes(box)
    for k, c in enumerate(curves):
        step = max(1, len(c) // max_points)
        out.append(_polyline(box, c[::step], PALETTE[k % len(PALETTE)]))
        if strips and strips[k] is not None:
            d, w = strips[k]
            d = np.asarray(d, float) / np.linalg.norm(d)
            n = np.array([-d[1], d[0]])
            s = (c - c[0]) @ n
            t = (c - c[0]) @ d
            for off in (s.min(), s.max()):
                ends = c[0] + np.outer([t.min(), t.max()], d) + off * n
                out.append(_polyline(box, ends, "#555555", 0.8).replace("/>", ' stroke-dasharray="4 3"/>'))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _lambert(v):
    """Lambert azimuthal equal-area projection of unit vectors about +z (upper hemisphere)."""
    v = np.asarray(v, dtype=float)
    k = np.sqrt(2.0 / (1.0 + np.clip(v[..., 2], -1 + 1e-12, None)))
    return np.stack([k * v[..., 0], k * v[..., 1]], -1)


def diagram_svg(directions, records, zones=None, size: int = 360) -> str:
    """Two Lambert hemispheres (z >= 0 and z <= 0 seen from below), coloured by zone."""
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    zones = zones or []
    color = {}
    for k, z in enumerate(zones):
        for i in z["members"]:
            color[i] = PALETTE[k % len(PALETTE)]
    W, H = 2 * size + 40, size + 30 + 18 * (len(zones) + 1)
    out = _header(W, H)
    r_disk = size / 2 - 20
    for h, (sign, label) in enumerate(((1, "upper (z >= 0)"), (-1, "lower (z <= 0)"))):
        cx = size / 2 + h * (size + 40)
        cy = size / 2
        out.append(f'<circle cx="{cx}" cy="{cy}" r="{_fmt(r_disk)}" fill="none" stroke="black"/>')
        out.append(f'<text x="{cx}" y="{size + 5}" font-size="12" text-anchor="middle">{label}</text>')
        for i, b in enumerate(directions):
            if sign * b[2] < 0:
                continue
            q = _lambert(np.array([b[0], b[1], sign * b[2]]))
            x = cx + q[0] / np.sqrt(2) * r_disk
            y = cy - q[1] / np.sqrt(2) * r_disk
            rec = records[i] if i < len(records) else {}
            fill = color.get(i, "#dddddd" if rec.get("class") == "Closed" else "#999999")
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{fill}"/>')
    y0 = size + 25
    for k, z in enumerate(zones):
        c = PALETTE[k % len(PALETTE)]
        M = ",".join(str(m) for m in z["M"])
        out.append(f'<rect x="10" y="{y0 + 18 * k}" width="12" height="12" fill="{c}"/>')
        out.append(f'<text x="28" y="{y0 + 18 * k + 10}" font-size="12">zone {z["id"]}: M=({M})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap_svg(fn, extent, lines=(), n: int = 80, size: int = 500) -> str:
    """Grey-scale map of fn on the square [-extent, extent]^2 plus traced lines."""
    xs = np.linspace(-extent, extent, n)
    X, Y = np.meshgrid(xs, xs)
    Z = fn(np.stack([X, Y], -1))
    lo, hi = float(Z.min()), float(Z.max())
    box = _Box(np.array([[-extent, -extent], [extent, extent]]), size)
    out = _header(size, size)
    cell = (xs[1] - xs[0]) * box.s
    for i in range(n):
        for j in range(n):
            g = int(255 * (Z[i, j] - lo) / (hi - lo)) if hi > lo else 128
            x, y = box(np.array([xs[j], xs[i]]))
            out.append(f'<rect x="{_fmt(x - cell / 2)}" y="{_fmt(y - cell / 2)}" width="{_fmt(cell + 0.5)}" '
                       f'height="{_fmt(cell + 0.5)}" fill="rgb({g},{g},{g})"/>')
    for k, c in enumerate(lines):
        c = np.asarray(c, dtype=float)
        inside = np.all(np.abs(c) <= extent, axis=1)
        if inside.any():
            out.append(_polyline(box, c[inside], PALETTE[k % len(PALETTE)], 1.5))
    out.append("</svg>")
    return "\n".join(out) + "\n"
