"""Deviation-growth exponents of open trajectories (Zorich-Kontsevich-Forni indices).

Exponents are limsup quantities, so fits go through the upper envelope of
log running maxima rather than through the raw points.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .flow import Trajectory


class SeriesTooShortError(ValueError):
    pass


@dataclass
class DeviationSeries:
    l: np.ndarray              # dyadic arc lengths l0 * 2^k
    dx: np.ndarray             # deviation along the fast axis
    dy: np.ndarray             # deviation along the slow axis
    p_scale: float = 1.0       # momentum normalisation (reciprocal cell diameter)
    axes: np.ndarray = field(default_factory=lambda: np.eye(2))   # rows: fast, slow axis in the plane frame
    drift: float = 0.0         # |net displacement| / length over the whole trace

    def to_csv(self) -> str:
        rows = ["l,dx,dy"] + [f"{float(a)!r},{float(b)!r},{float(c)!r}" for a, b, c in zip(self.l, self.dx, self.dy)]
        return "\n".join(rows) + "\n"


@dataclass
class IndexEstimate:
    nu2: float
    nu3: float
    conf2: float
    conf3: float
    axes: np.ndarray
    cycle_residual: float
    valid: bool

    def to_dict(self) -> dict:
        return {"nu2": self.nu2, "nu3": self.nu3, "conf2": self.conf2, "conf3": self.conf3,
                "axes": np.asarray(self.axes).tolist(), "cycle_residual": self.cycle_residual,
                "valid": self.valid}


def envelope_slope(x, y) -> float:
    """Slope of the least-area line lying above all points (x_k, y_k).

    Minimising sum(a + s x_k - y_k) subject to the line dominating every
    point is a 2-variable LP whose optimum is the upper-hull edge spanning
    mean(x); we walk the hull directly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hull = []
    for i in range(len(x)):
        # monotone chain, upper hull (x is increasing)
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    xm = x.mean()
    for a, b in zip(hull[:-1], hull[1:]):
        if x[a] <= xm <= x[b]:
            return float((y[b] - y[a]) / (x[b] - x[a]))
    a, b = hull[0], hull[-1]
    return float((y[b] - y[a]) / (x[b] - x[a]))


def _log_envelope(l, dev, scale):
    m = np.maximum.accumulate(np.abs(np.asarray(dev, dtype=float)))
    if np.any(m <= 0):
        raise ValueError("deviations must be positive after the running maximum")
    return np.log(np.asarray(l) / scale), np.log(m / scale)


def growth_exponent(l, dev, scale: float = 1.0) -> tuple:
    """(envelope slope, confidence half-width) for one deviation component.

    The confidence compares the full-range slope with the slope over the
    late half of the samples (a crude stationarity check), floored at 0.01.
    """
    x, y = _log_envelope(l, dev, scale)
    s_full = envelope_slope(x, y)
    k = len(x) // 2
    s_late = envelope_slope(x[k:], y[k:])
    return s_full, max(0.01, abs(s_full - s_late))


def _rotate(disp, phi):
    c, s = np.cos(phi), np.sin(phi)
    return disp @ np.array([[c, -s], [s, c]])


def principal_axes(l, disp, scale: float = 1.0, step_deg: float = 1.0, drift_tol: float = 0.05) -> np.ndarray:
    """Rotation (rows: fast axis, slow axis) maximising the gap in envelope growth.

    Angles are scanned over [0, 180) degrees; ties keep the smallest angle.
    """
    disp = np.asarray(disp, dtype=float)
    l = np.asarray(l, dtype=float)
    best, best_phi = -np.inf, 0.0
    for deg in np.arange(0.0, 180.0, step_deg):
        phi = np.deg2rad(deg)
        r = _rotate(disp, phi)
        try:
            sx = envelope_slope(*_log_envelope(l, np.abs(r[:, 0]) + 1e-300, scale))
            sy = envelope_slope(*_log_envelope(l, np.abs(r[:, 1]) + 1e-300, scale))
        except ValueError:
            continue
        gap = abs(sx - sy)
        if gap > best + 1e-12:
            best, best_phi = gap, phi if sx >= sy else phi + np.pi / 2
    phi = best_phi
    end = disp[-1]
    k = len(l) // 2
    linear = envelope_slope(*_log_envelope(l[k:], np.linalg.norm(disp[k:], axis=1) + 1e-300, scale)) > 0.9
    if linear and np.linalg.norm(end) > drift_tol * l[-1]:
        # linear drift present: a 1-degree misalignment would leak it into the
        # slow component, so align the fast axis with the net displacement
        phi = float(np.arctan2(end[1], end[0]))
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, s], [-s, c]])


def deviation_series(traj: Trajectory, l0: float = None, n_min: int = 10) -> DeviationSeries:
    """Displacements from the start at dyadic arc lengths, in principal axes."""
    scale = traj.dispersion.reciprocal.cell_diameter if traj.dispersion is not None else 1.0
    l0 = l0 or scale / 8.0
    if traj.length < l0 * 2 ** n_min:
        raise SeriesTooShortError(f"length {traj.length:.1f} < {l0 * 2 ** n_min:.1f}")
    kmax = int(np.floor(np.log2(traj.length / l0)))
    l = l0 * 2.0 ** np.arange(kmax + 1)
    uv = traj.uv - traj.uv[0]
    disp = np.column_stack([np.interp(l, traj.arc, uv[:, 0]), np.interp(l, traj.arc, uv[:, 1])])
    axes = principal_axes(l, disp, scale)
    r = disp @ axes.T
    drift = float(np.linalg.norm(uv[-1]) / traj.length)
    return DeviationSeries(l, r[:, 0], r[:, 1], scale, axes, drift)


def series_from_arrays(l, dx, dy, p_scale: float = 1.0, rotate: bool = False) -> DeviationSeries:
    """Wrap raw samples, taken to be in principal axes already.

    With rotate=True the axes are searched as for traced trajectories. On
    monotone synthetic walks that search is biased: a small tilt lets the
    fast component cancel the slow one inside the window.
    """
    l = np.asarray(l, dtype=float)
    if np.any(np.diff(l) <= 0):
        raise ValueError("arc lengths must increase")
    disp = np.column_stack([dx, dy]).astype(float)
    axes = principal_axes(l, disp, p_scale) if rotate else np.eye(2)
    r = disp @ axes.T
    return DeviationSeries(l, r[:, 0], r[:, 1], p_scale, axes)


def estimate_indices(series: DeviationSeries) -> IndexEstimate:
    if len(series.l) < 8:
        raise SeriesTooShortError("need at least 8 dyadic samples")
    if np.any(np.abs(series.dx) == 0) and np.all(series.dx == 0):
        raise ValueError("non-positive deviations")
    s2, c2 = growth_exponent(series.l, series.dx, series.p_scale)
    s3, c3 = growth_exponent(series.l, series.dy, series.p_scale)
    axes = np.asarray(series.axes)
    if s3 > s2:
        s2, s3, c2, c3 = s3, s2, c3, c2
        axes = axes[::-1]
    valid = (-c3 <= s3) and (s3 <= s2 + c2 + c3) and (s2 <= 1.0 + c2)
    return IndexEstimate(s2, s3, c2, c3, axes, series.drift, bool(valid))


def predict_transport_trend(est: IndexEstimate) -> dict:
    """Exponent trends of the in-plane conductivity (x along the fast deviation axis)."""
    if not est.valid:
        raise ValueError("estimate outside 0 <= nu3 <= nu2 <= 1")
    return {
        "sxx": (2 * est.nu3 - 2, 2 * est.conf3),
        "syy": (2 * est.nu2 - 2, 2 * est.conf2),
        "sxy_bound": (est.nu2 + est.nu3 - 2, est.conf2 + est.conf3),
    }


def fit_report(series: DeviationSeries, est: IndexEstimate) -> str:
    out = est.to_dict()
    out["samples"] = len(series.l)
    out["p_scale"] = series.p_scale
    try:
        out["trend"] = {k: list(v) for k, v in predict_transport_trend(est).items()}
    except ValueError:
        out["trend"] = None
    return json.dumps(out, sort_keys=True, indent=1)
