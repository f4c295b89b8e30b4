"""Semiclassical quantization of closed orbits, extremal sections, magnetic breakdown."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import _kernels as kern
from .flow import (Orientation, Termination, TraceLimits, Trajectory, detect_closure,
                   plane_frame, trace)
from .lattice import Dispersion, evaluate


class NotClosedError(ValueError):
    pass


class SelfIntersectionError(ValueError):
    pass


class QuantumRangeError(ValueError):
    pass


def _segments_cross(P, Q):
    """Proper crossings between segments P[i]->P[i+1] and Q[j]->Q[j+1] (non-adjacent)."""
    a, b = P[:-1], P[1:]
    c, d = Q[:-1], Q[1:]

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    A, B = a[:, None], b[:, None]
    C, D = c[None, :], d[None, :]
    o1, o2 = orient(A, B, C), orient(A, B, D)
    o3, o4 = orient(C, D, A), orient(C, D, B)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    n = len(a)
    i, j = np.indices(hit.shape)
    near = (np.abs(i - j) <= 1) | (np.abs(i - j) >= n - 1)
    return bool(np.any(hit & ~near))


def polygon_area(uv, correct: bool = True) -> float:
    """Signed area of a closed polyline sampled from a smooth curve.

    The chord polygon misses a circular segment c^2 * theta / 12 per chord
    (chord length c, turning angle theta), which brings the error from
    O(theta^2) down to O(theta^4).
    """
    uv = np.asarray(uv, dtype=float)
    if np.allclose(uv[0], uv[-1]):
        uv = uv[:-1]
    nxt = np.roll(uv, -1, axis=0)
    area = 0.5 * float(np.sum(uv[:, 0] * nxt[:, 1] - nxt[:, 0] * uv[:, 1]))
    if not correct:
        return area
    chord = nxt - uv
    ang = np.arctan2(chord[:, 1], chord[:, 0])
    turn = np.angle(np.exp(1j * (np.roll(ang, -1) - ang)))     # turn at the far end of each chord
    theta = 0.5 * (turn + np.roll(turn, 1))                     # chord's own arc angle
    c2 = np.einsum("ij,ij->i", chord, chord)
    return area + float(np.sum(c2 * theta) / 12.0)


def orbit_area(traj: Trajectory, check_simple: bool = True) -> tuple:
    """(|area|, orientation) of a closed trajectory in its plane."""
    if traj.termination != Termination.ClosedReturn or len(traj.uv) < 4:
        raise NotClosedError("orbit_area needs a ClosedReturn trajectory with at least 4 points")
    uv = traj.uv
    if check_simple and len(uv) <= 4000 and _segments_cross(uv, uv):
        raise SelfIntersectionError("self-intersecting orbit polygon (near a separatrix?)")
    kind = detect_closure(traj).orientation
    return abs(polygon_area(uv)), kind


def polyline_area(uv) -> float:
    """Area of a raw polygon (no smoothness correction); rejects degenerate input."""
    uv = np.asarray(uv, dtype=float)
    if len(uv) < 3:
        raise ValueError("degenerate polygon")
    return abs(polygon_area(uv, correct=False))


def orbit_around(d: Dispersion, level: float, b, center, direction=None, limits: TraceLimits = None,
                 reach: float = None) -> Trajectory:
    """The closed orbit at `level` surrounding `center` (a point of the plane).

    Seeded at the first level crossing on the ray from `center` along
    `direction` (default e1). Raises NotClosedError if no closed orbit.
    """
    fr = plane_frame(b, center)
    K, amp, ph, quad = d.kernel_args()
    direction = fr.e1 if direction is None else np.asarray(direction, dtype=float)
    reach = reach or d.reciprocal.cell_diameter
    f = lambda t: d(fr.origin + t * direction) - level
    ts = np.linspace(0.0, reach, 2049)
    vals = np.array([f(t) for t in ts])
    idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if len(idx) == 0:
        raise NotClosedError("no level crossing along the ray")
    i = idx[0]
    t0 = brentq(f, ts[i], ts[i + 1], xtol=1e-15, rtol=1e-15)
    start = fr.origin + t0 * direction
    u, v, ok = kern.newton_project(K, amp, ph, quad, fr.origin, fr.e1, fr.e2,
                                   float(start @ fr.e1 - fr.origin @ fr.e1),
                                   float(start @ fr.e2 - fr.origin @ fr.e2), level, 1e-14, 50)
    start = fr.origin + u * fr.e1 + v * fr.e2
    tr = trace(d, level, b, start, limits or TraceLimits(max_len=50 * reach), origin=center)
    if tr.termination != Termination.ClosedReturn:
        raise NotClosedError(f"orbit not closed ({tr.termination.name})")
    return tr


@dataclass
class OrbitAreaFunction:
    eps: np.ndarray            # (ne,)
    pz: np.ndarray             # (npz,) offsets along b
    area: np.ndarray           # (ne, npz), nan where no closed orbit of the family
    period: np.ndarray         # (ne, npz) turn time T
    orientation: list          # per pz: majority orientation name

    def to_csv(self) -> str:
        rows = ["eps,pz,area,period"]
        for i, e in enumerate(self.eps):
            for j, z in enumerate(self.pz):
                rows.append(f"{float(e)!r},{float(z)!r},{float(self.area[i, j])!r},{float(self.period[i, j])!r}")
        return "\n".join(rows) + "\n"


def tabulate_areas(d: Dispersion, b, eps, pz, center=(0.0, 0.0, 0.0), limits: TraceLimits = None) -> OrbitAreaFunction:
    """S(eps, pz) for the orbit family surrounding the line center + pz * b."""
    b = np.asarray(b, dtype=float) / np.linalg.norm(b)
    eps = np.asarray(eps, dtype=float)
    pz = np.asarray(pz, dtype=float)
    S = np.full((len(eps), len(pz)), np.nan)
    T = np.full_like(S, np.nan)
    orient = []
    for j, z in enumerate(pz):
        c = np.asarray(center, dtype=float) + z * b
        kinds = []
        for i, e in enumerate(eps):
            try:
                tr = orbit_around(d, e, b, c, limits=limits)
                S[i, j], k = orbit_area(tr, check_simple=False)
                T[i, j] = tr.period
                kinds.append(k.value)
            except NotClosedError:
                continue
        orient.append(max(set(kinds), key=kinds.count) if kinds else Orientation.Undefined.value)
    return OrbitAreaFunction(eps, pz, S, T, orient)


@dataclass
class LevelSet:
    n: np.ndarray
    eps: np.ndarray
    phi_b: float
    pz: float = 0.0

    def to_csv(self) -> str:
        rows = ["pz,n,eps"] + [f"{float(self.pz)!r},{int(k)},{float(e)!r}" for k, e in zip(self.n, self.eps)]
        return "\n".join(rows) + "\n"


def flux_quantum(b_mag: float) -> float:
    """Area quantum 2*pi*e*hbar*B/c in reduced units."""
    return 2.0 * np.pi * b_mag


def quantize(eps, area, b_mag: float, n_range, pz: float = 0.0) -> LevelSet:
    """Levels with S(eps_n) = 2 pi B (n + 1/2) by monotone interpolation of the table."""
    eps = np.asarray(eps, dtype=float)
    area = np.asarray(area, dtype=float)
    ok = np.isfinite(area)
    eps, area = eps[ok], area[ok]
    if len(area) < 2:
        raise QuantumRangeError("fewer than two closed orbits in the area table")
    order = np.argsort(area)
    eps, area = eps[order], area[order]
    if np.any(np.diff(area) <= 0):
        raise QuantumRangeError("area table is not strictly monotone on the family")
    phi = flux_quantum(b_mag)
    n = np.arange(n_range[0], n_range[1] + 1)
    target = phi * (n + 0.5)
    if target.min() < area[0] or target.max() > area[-1]:
        raise QuantumRangeError(f"n range needs areas [{target.min():.4g}, {target.max():.4g}], "
                                f"table covers [{area[0]:.4g}, {area[-1]:.4g}]")
    inv = PchipInterpolator(area, eps)
    return LevelSet(n, inv(target), phi, pz)


def level_spacing(period: float, b_mag: float) -> float:
    """Local spacing phi_B / (dS/deps); dS/deps equals the turn time T in reduced units."""
    return flux_quantum(b_mag) / period


def find_extremal_orbits(pz, area) -> list:
    """Interior local extrema of S(pz) at fixed energy, refined by a parabola through 3 points."""
    pz = np.asarray(pz, dtype=float)
    S = np.asarray(area, dtype=float)
    if len(pz) < 5:
        raise ValueError("need at least 5 pz samples")
    out = []
    for i in range(1, len(pz) - 1):
        a, c, e = S[i - 1], S[i], S[i + 1]
        if not np.all(np.isfinite([a, c, e])):
            continue
        if (c > a and c >= e) or (c < a and c <= e):
            x0, x1, x2 = pz[i - 1], pz[i], pz[i + 1]
            den = (x0 - x1) * (x0 - x2) * (x1 - x2)
            A = (x2 * (c - a) + x1 * (a - e) + x0 * (e - c)) / den
            B = (x2 * x2 * (a - c) + x1 * x1 * (e - a) + x0 * x0 * (c - e)) / den
            out.append(float(-B / (2 * A)) if A != 0 else float(x1))
    return out


def tau_eff(tau: float, tau1: float) -> float:
    if tau <= 0 or tau1 <= 0:
        raise ValueError("relaxation times must be positive")
    return 1.0 / (1.0 / tau + 1.0 / tau1)


@dataclass
class Saddle:
    uv: np.ndarray
    value: float
    hess_eig: tuple            # (positive, negative) eigenvalues of the in-plane Hessian
    axis: np.ndarray           # eigenvector of the positive eigenvalue (in-plane)


def _plane_hessian(d, fr, uv, h=1e-5):
    def g(x):
        p = fr.to_space(x)
        gr = evaluate(d, p)[1]
        return np.array([gr @ fr.e1, gr @ fr.e2])
    H = np.zeros((2, 2))
    for k in range(2):
        dx = np.zeros(2)
        dx[k] = h
        H[:, k] = (g(uv + dx) - g(uv - dx)) / (2 * h)
    return 0.5 * (H + H.T), g


def find_saddles(d: Dispersion, b, p0, extent: float = None, grid: int = 96) -> list:
    """Non-degenerate saddles of h(u, v) = eps(p0 + u e1 + v e2) in a window of one cell diameter."""
    fr = plane_frame(b, p0)
    K, amp, ph, quad = d.kernel_args()
    extent = extent or d.reciprocal.cell_diameter
    xs = np.linspace(-extent / 2, extent / 2, grid + 1)
    H = kern.grid_values(K, amp, ph, quad, fr.origin, fr.e1, fr.e2, xs, xs)
    gu, gv = np.gradient(H, xs, xs)
    gn = np.hypot(gu, gv)
    # local minima of |grad h| on the grid seed Newton on grad h = 0
    cands = []
    for i in range(1, grid):
        for j in range(1, grid):
            w = gn[i - 1:i + 2, j - 1:j + 2]
            if gn[i, j] == w.min():
                cands.append(np.array([xs[i], xs[j]]))
    out = []
    tol = 1e-7 * extent
    for x in cands:
        for _ in range(50):
            Hs, g = _plane_hessian(d, fr, x)
            step = np.linalg.solve(Hs, g(x)) if abs(np.linalg.det(Hs)) > 1e-14 else np.zeros(2)
            x = x - step
            if np.linalg.norm(step) < 1e-13:
                break
        Hs, g = _plane_hessian(d, fr, x)
        if np.linalg.norm(g(x)) > 1e-9 or np.abs(x).max() > extent / 2:
            continue
        w, V = np.linalg.eigh(Hs)
        if not (w[0] < 0 < w[1]):
            continue
        if any(np.linalg.norm(x - s.uv) < tol for s in out):
            continue
        out.append(Saddle(x, float(d(fr.to_space(x))), (float(w[1]), float(w[0])), V[:, 1]))
    out.sort(key=lambda s: (round(s.uv[0], 9), round(s.uv[1], 9)))
    return out


@dataclass
class Gap:
    saddle: Saddle
    gap: float                 # distance between the two arcs through the saddle neighbourhood
    halves: tuple              # distances from the saddle to each arc


def breakdown_gaps(d: Dispersion, level: float, b, p0, window: float = 0.25) -> list:
    """Minimal separations between the two arcs passing each near-critical saddle.

    A saddle of h with value h_s is near-critical if |level - h_s| < window.
    The arcs cross the Hessian eigen-direction on which h moves towards the
    level (positive eigenvalue if level > h_s, negative otherwise).
    """
    fr = plane_frame(b, p0)
    out = []
    for s in find_saddles(d, b, p0):
        dl = level - s.value
        if dl == 0.0 or abs(dl) >= window:
            continue
        lam_p, lam_m = s.hess_eig
        axis = s.axis if dl > 0 else np.array([-s.axis[1], s.axis[0]])
        lam = lam_p if dl > 0 else -lam_m
        guess = np.sqrt(2 * abs(dl) / lam)
        f = lambda t: d(fr.to_space(s.uv + t * axis)) - level
        halves = []
        for sign in (1.0, -1.0):
            ts = sign * guess * np.linspace(0.0, 4.0, 401)
            vals = np.array([f(t) for t in ts])
            k = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
            if len(k) == 0:
                break
            k = k[0]
            halves.append(abs(brentq(f, ts[k], ts[k + 1], xtol=1e-15, rtol=1e-15)))
        if len(halves) == 2:
            out.append(Gap(s, halves[0] + halves[1], tuple(halves)))
    return out


def gaps_json(gaps) -> str:
    return json.dumps([{"saddle_uv": g.saddle.uv.tolist(), "saddle_value": g.saddle.value,
                        "hessian": list(g.saddle.hess_eig), "gap": g.gap, "halves": list(g.halves)}
                       for g in gaps], sort_keys=True, indent=1)


@dataclass
class BreakdownModel:
    """Jump probability P(B) = 1/2 exp(-B0 / B) per saddle passage; tau1 = t_pass / P.

    For h ~ h_s + (a u^2 - c v^2)/2 and level offset delta the arcs are
    g = 2 sqrt(2 delta / a) apart, and inverted-oscillator tunnelling with
    hbar_eff = B gives B0 = 2 pi delta / sqrt(a c) = pi a g^2 / (4 sqrt(a c)).
    The full transmission 1/(1 + exp(B0/B)) has the same two limits (0 at
    small B, 1/2 at large B); the simpler exponential is used here.
    """
    tau: float
    t_pass: float              # mean time between saddle passages along the orbit
    b0: float

    @classmethod
    def from_gap(cls, tau: float, t_pass: float, gap: Gap) -> "BreakdownModel":
        a, c = gap.saddle.hess_eig[0], -gap.saddle.hess_eig[1]
        b0 = np.pi * a * gap.gap ** 2 / (4.0 * np.sqrt(a * c))
        return cls(tau, t_pass, float(b0))

    def probability(self, b_mag: float) -> float:
        return 0.5 * float(np.exp(-self.b0 / b_mag))

    def tau1(self, b_mag: float) -> float:
        p = self.probability(b_mag)
        return np.inf if p == 0.0 else self.t_pass / p

    def tau_eff(self, b_mag: float) -> float:
        t1 = self.tau1(b_mag)
        return self.tau if np.isinf(t1) else tau_eff(self.tau, t1)
