"""Trajectories of p' = grad(eps) x b as level lines in planes orthogonal to b.

Tracing is geometric contour following (predictor along the tangent,
Newton corrector back onto the level), not ODE integration, so the two
conserved quantities, eps(p) and p.b, hold to corrector tolerance however
long the trace. Time is rebuilt afterwards from dt = dl / |grad_perp eps|
(field factor omega = 1 in reduced units).
"""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .lattice import Dispersion, ReciprocalLattice, evaluate

TOL_E = 1e-9
TOL_B = 1e-9


class Termination(enum.Enum):
    LengthLimit = kern.LENGTH_LIMIT
    ClosedReturn = kern.CLOSED_RETURN
    PeriodClose = kern.PERIOD_CLOSE
    SingularStop = kern.SINGULAR_STOP
    StepLimit = kern.STEP_LIMIT
    NewtonStall = kern.NEWTON_STALL


class ClosureKind(enum.Enum):
    Closed = "Closed"
    PeriodicOpen = "PeriodicOpen"
    StillOpen = "StillOpen"


class Orientation(enum.Enum):
    ElectronLike = "ElectronLike"
    HoleLike = "HoleLike"
    Undefined = "Undefined"


class NotOnLevelError(ValueError):
    pass


class AmbiguousClosureError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlaneFrame:
    e1: np.ndarray
    e2: np.ndarray
    b: np.ndarray
    origin: np.ndarray

    def to_plane(self, p):
        d = np.asarray(p, dtype=float) - self.origin
        return np.stack([d @ self.e1, d @ self.e2], axis=-1)

    def to_space(self, uv):
        uv = np.asarray(uv, dtype=float)
        return self.origin + uv[..., :1] * self.e1 + uv[..., 1:2] * self.e2

    @property
    def rotation(self) -> np.ndarray:
        """Rows e1, e2, b: maps lab vectors to frame components."""
        return np.array([self.e1, self.e2, self.b])


def unit(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return b / np.linalg.norm(b)


def plane_frame(b, p0=(0.0, 0.0, 0.0)) -> PlaneFrame:
    b = unit(b)
    z = np.array([0.0, 0.0, 1.0])
    c = np.cross(b, z)
    if np.linalg.norm(c) > 1e-6:
        e1 = c / np.linalg.norm(c)
    else:
        e1 = np.array([1.0, 0.0, 0.0])
        e1 = e1 - (e1 @ b) * b
        e1 /= np.linalg.norm(e1)
    e2 = np.cross(b, e1)
    return PlaneFrame(e1, e2, b, np.asarray(p0, dtype=float).copy())


@dataclass
class TraceLimits:
    max_len: float = 200.0
    max_steps: int = 200_000
    h0: float = 0.05
    h_max: float = 0.25
    max_turn: float = 0.1
    newton_tol: float = 1e-12
    delta_sing: float = 1e-6
    detect_closure: bool = True
    close_tol: float = None   # default 1e-6 of the reciprocal cell diameter
    m_max: int = 8


@dataclass
class Trajectory:
    uv: np.ndarray            # (n, 2)
    arc: np.ndarray           # (n,)
    time: np.ndarray          # (n,)
    level: float
    frame: PlaneFrame
    termination: Termination
    q_coeffs: tuple = (0, 0, 0)
    sense: int = 1
    dispersion: Dispersion = field(default=None, repr=False)

    @property
    def points(self) -> np.ndarray:
        return self.frame.to_space(self.uv)

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    @property
    def period(self) -> float:
        """Total traversal time (the turn time T for closed orbits)."""
        return float(self.time[-1])

    def __len__(self):
        return len(self.arc)

    def residuals(self):
        """(max |eps - level|, max |(p - p0).b|) over the stored points."""
        p = self.points
        e = evaluate(self.dispersion, p)[0]
        return float(np.max(np.abs(e - self.level))), float(np.max(np.abs((p - self.frame.origin) @ self.frame.b)))

    def velocities(self) -> np.ndarray:
        return evaluate(self.dispersion, self.points)[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "v", "p1", "p2", "p3", "l", "t"])
        for (u, v), p, l, t in zip(self.uv, self.points, self.arc, self.time):
            w.writerow([repr(float(x)) for x in (u, v, p[0], p[1], p[2], l, t)])
        return buf.getvalue()

    def metadata(self) -> dict:
        de, db = self.residuals() if self.dispersion is not None else (None, None)
        return {
            "termination": self.termination.name,
            "q_coeffs": [int(x) for x in self.q_coeffs],
            "level": self.level,
            "points": len(self),
            "length": self.length,
            "period": self.period,
            "energy_residual_max": de,
            "plane_residual_max": db,
            "b": self.frame.b.tolist(),
            "origin": self.frame.origin.tolist(),
        }


@dataclass(frozen=True)
class ClosureResult:
    kind: ClosureKind
    orientation: Orientation = Orientation.Undefined
    q: tuple = None           # reciprocal lattice vector (3-vector) for PeriodicOpen
    q_coeffs: tuple = None


def _close_tol(d: Dispersion, limits: TraceLimits) -> float:
    if limits.close_tol is not None:
        return limits.close_tol
    return 1e-6 * d.reciprocal.cell_diameter


def newton_project(d: Dispersion, level: float, p, b, tol: float = 1e-12) -> np.ndarray:
    """Move p within its plane orthogonal to b onto the level set."""
    fr = plane_frame(b, p)
    K, amp, ph, quad = d.kernel_args()
    u, v, ok = kern.newton_project(K, amp, ph, quad, fr.origin, fr.e1, fr.e2, 0.0, 0.0, level, tol, 100)
    if not ok:
        raise NotOnLevelError("Newton projection did not converge")
    return fr.to_space(np.array([u, v]))


def trace(d: Dispersion, level: float, b, start, limits: TraceLimits = None, sense: int = 1,
          origin=None) -> Trajectory:
    """Trace the trajectory through `start` at energy `level` for field direction b.

    The plane passes through `origin` (default: `start`). `sense=-1` runs
    against the physical direction of motion.
    """
    limits = limits or TraceLimits()
    start = np.asarray(start, dtype=float)
    e0 = evaluate(d, start)[0]
    if abs(e0 - level) > TOL_E:
        raise NotOnLevelError(f"start is off the level set by {abs(e0 - level):.3e}")
    fr = plane_frame(b, start if origin is None else origin)
    u0, v0 = fr.to_plane(start)
    K, amp, ph, quad = d.kernel_args()
    rec = d.reciprocal
    # typical gradient scale sets the singular neighbourhood
    gscale = max(float(np.abs(d.amplitudes) @ np.linalg.norm(K, axis=1)) if len(K) else 0.0, abs(quad) or 0.0, 1e-300)
    cell = rec.cell_diameter
    U, V, L, T, code, qm = kern.trace_kernel(
        K, amp, ph, quad, fr.origin, fr.e1, fr.e2, fr.b, float(level), float(u0), float(v0), float(sense),
        float(limits.max_len), int(limits.max_steps), limits.h0, limits.h_max, 1e-6 * cell,
        limits.max_turn, limits.newton_tol, limits.delta_sing * gscale, bool(limits.detect_closure),
        _close_tol(d, limits), np.ascontiguousarray(d.lattice.matrix), np.ascontiguousarray(rec.matrix),
        int(limits.m_max if d.periodic else 0), 1e-9)
    return Trajectory(np.column_stack([U, V]), L, T, float(level), fr, Termination(code),
                      tuple(int(x) for x in qm), sense, d)


def signed_area(uv: np.ndarray) -> float:
    x, y = uv[:, 0], uv[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]) + (x[-1] * y[0] - x[0] * y[-1]))


def detect_closure(traj: Trajectory, lattice: ReciprocalLattice = None, m_max: int = 8,
                   close_tol: float = None) -> ClosureResult:
    """Closed, PeriodicOpen(q) or StillOpen for a traced trajectory.

    Closure found during tracing is trusted; otherwise the endpoint is
    matched against start + q for |m_i| <= m_max.
    """
    d = traj.dispersion
    lattice = lattice or d.reciprocal
    if close_tol is None:
        close_tol = 1e-6 * lattice.cell_diameter
    uv = traj.uv
    if traj.termination == Termination.ClosedReturn:
        return ClosureResult(ClosureKind.Closed, _orientation(traj))
    if traj.termination == Termination.PeriodClose:
        m = traj.q_coeffs
        return ClosureResult(ClosureKind.PeriodicOpen, Orientation.Undefined, tuple(lattice.vector(m)), m)
    if len(uv) < 3:
        return ClosureResult(ClosureKind.StillOpen)
    p = traj.points
    disp = p[-1] - p[0]
    if np.linalg.norm(disp) <= close_tol:
        return ClosureResult(ClosureKind.Closed, _orientation(traj))
    A = lattice.matrix
    r = np.arange(-m_max, m_max + 1)
    M = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    M = M[np.any(M != 0, axis=1)]
    Q = M @ A
    dist = np.linalg.norm(disp - Q, axis=1)
    hits = np.flatnonzero(dist <= close_tol)
    if len(hits) > 1:
        raise AmbiguousClosureError("several lattice vectors match the endpoint; shrink the step")
    if len(hits) == 1:
        i = hits[0]
        return ClosureResult(ClosureKind.PeriodicOpen, Orientation.Undefined, tuple(Q[i]), tuple(int(x) for x in M[i]))
    return ClosureResult(ClosureKind.StillOpen)


def _orientation(traj: Trajectory) -> Orientation:
    """Electron-like if the enclosed region has eps < level.

    With motion along grad(eps) x b, electron pockets are run clockwise in
    the right-handed (e1, e2) frame, so the signed area is negative; the
    interior probe must agree with the sense or the verdict is Undefined.
    """
    uv = traj.uv
    if len(uv) < 4:
        return Orientation.Undefined
    area = signed_area(uv)
    # probe just inside the curve: step from a point along the inward normal
    d = traj.dispersion
    fr = traj.frame
    k = len(uv) // 3
    seg = uv[k + 1] - uv[k]
    seg /= np.linalg.norm(seg)
    left = np.array([-seg[1], seg[0]])      # interior lies to the left for ccw curves
    inward = left if area > 0 else -left
    scale = max(np.ptp(uv[:, 0]), np.ptp(uv[:, 1]))
    probe = fr.to_space(uv[k] + inward * 1e-3 * scale)
    inside_low = evaluate(d, probe)[0] < traj.level
    by_sense = area < 0
    if inside_low and by_sense:
        return Orientation.ElectronLike
    if not inside_low and not by_sense:
        return Orientation.HoleLike
    return Orientation.Undefined


def seed_section(d: Dispersion, level: float, b, p0=(0.0, 0.0, 0.0), n_seeds: int = 16,
                 grid: int = 64, extent: float = None, min_sep: float = None) -> list:
    """Points on {eps = level} in the plane through p0 orthogonal to b.

    Sign changes of h - level are located on a (u, v) grid spanning one
    reciprocal cell diameter and refined by bisection + Newton.
    """
    if d.periodic and not (d.eps_min <= level <= d.eps_max):
        return []
    fr = plane_frame(b, p0)
    K, amp, ph, quad = d.kernel_args()
    cell = d.reciprocal.cell_diameter
    extent = extent or cell
    min_sep = min_sep or 1e-6 * cell
    xs = np.linspace(-extent / 2, extent / 2, grid + 1)
    H = kern.grid_values(K, amp, ph, quad, fr.origin, fr.e1, fr.e2, xs, xs) - level
    cand = []
    for axis in (0, 1):
        A = H if axis == 0 else H.T
        s = np.sign(A)
        ii, jj = np.nonzero(s[:-1, :] * s[1:, :] < 0)
        for i, j in zip(ii, jj):
            # crossing between xs[i] and xs[i+1] along the axis; xs[j] fixed
            f0, f1 = A[i, j], A[i + 1, j]
            t = f0 / (f0 - f1)
            x = xs[i] + t * (xs[i + 1] - xs[i])
            cand.append((x, xs[j]) if axis == 0 else (xs[j], x))
    if not cand:
        return []
    # deterministic interleaving so the first seeds spread over the plane
    cand = np.array(cand)
    order = np.lexsort((cand[:, 1], cand[:, 0]))
    cand = cand[order]
    stride = max(1, len(cand) // max(n_seeds, 1))
    picked = list(range(0, len(cand), stride)) + [i for i in range(len(cand)) if i % stride]
    seeds = []
    for i in picked:
        if len(seeds) >= n_seeds:
            break
        u, v, ok = kern.newton_project(K, amp, ph, quad, fr.origin, fr.e1, fr.e2, cand[i, 0], cand[i, 1],
                                       level, 1e-13, 50)
        if not ok:
            continue
        p = fr.to_space(np.array([u, v]))
        if all(np.linalg.norm(p - s) > min_sep for s in seeds):
            seeds.append(p)
    return seeds


def nearest_on_trace(traj: Trajectory, point) -> float:
    """Distance from `point` to the traced curve (chords re-projected on the level)."""
    uv = traj.uv
    target = traj.frame.to_plane(point)
    a, bb = uv[:-1], uv[1:]
    dv = bb - a
    L2 = np.einsum("ij,ij->i", dv, dv)
    L2[L2 == 0] = 1.0
    t = np.clip(np.einsum("ij,ij->i", target - a, dv) / L2, 0.0, 1.0)
    c = a + t[:, None] * dv
    i = int(np.argmin(np.linalg.norm(c - target, axis=1)))
    d = traj.dispersion
    K, amp, ph, quad = d.kernel_args()
    fr = traj.frame
    u, v, _ = kern.newton_project(K, amp, ph, quad, fr.origin, fr.e1, fr.e2, c[i, 0], c[i, 1],
                                  traj.level, 1e-13, 50)
    return float(np.linalg.norm(np.array([u, v]) - target))


def export_trajectory(traj: Trajectory) -> tuple:
    """(CSV text, JSON metadata text)."""
    return traj.to_csv(), json.dumps(traj.metadata(), sort_keys=True, indent=1)
