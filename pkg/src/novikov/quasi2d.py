"""Quasiperiodic potentials on the plane: superpositions of 1D cosine waves.

A potential with N wave directions is the restriction of an N-periodic
function F(x) = sum_j a_j cos(m_j . x + phi_j) to the embedded plane
x = K r, with K the N x 2 matrix of basis wavevectors. By default each wave
is its own basis direction (m_j = e_j); an explicit embedding lets several
waves share basis vectors, which is how planted integral planes are built.

Level lines are traced with the same predictor-corrector kernel as the
magnetic trajectories (the plane is z = 0, field along z).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0

from .classify import ClassifyConfig, InconclusiveError, Kind, NoIntegralPlaneError, classify, irreducible_vectors, tls_direction
from .flow import ClosureKind, ClosureResult, Termination, TraceLimits, Trajectory, detect_closure, trace
from .lattice import Dispersion, Term


@dataclass(frozen=True)
class Wave:
    k: tuple                   # 2-vector
    amp: float
    phase: float = 0.0


def _direction_classes(ks, tol=1e-9) -> list:
    """Group wavevectors by direction (parallel and antiparallel together)."""
    classes = []
    for i, k in enumerate(ks):
        u = k / np.linalg.norm(k)
        for c in classes:
            v = ks[c[0]] / np.linalg.norm(ks[c[0]])
            if abs(u[0] * v[1] - u[1] * v[0]) < tol:
                c.append(i)
                break
        else:
            classes.append([i])
    return classes


@dataclass
class QuasiPotential:
    """V(r) = sum a_j cos(k_j . r + phi_j).

    `basis` (N x 2) and integer `m` (one row per wave, k_j = m_j K) give the
    lift to the N-torus; when omitted every wave is its own basis vector.
    """
    waves: tuple
    basis: np.ndarray = None
    m: np.ndarray = None
    N: int = field(init=False)

    def __post_init__(self):
        self.waves = tuple(w if isinstance(w, Wave) else Wave(tuple(w[0]), float(w[1]), float(w[2]) if len(w) > 2 else 0.0)
                           for w in self.waves)
        if not self.waves:
            raise ValueError("no waves")
        if self.basis is None:
            self.basis = self.k.copy()
            self.m = np.eye(len(self.waves), dtype=int)
        else:
            self.basis = np.asarray(self.basis, dtype=float)
            self.m = np.asarray(self.m, dtype=int)
            if not np.allclose(self.m @ self.basis, self.k, atol=1e-12):
                raise ValueError("wavevectors do not match m @ basis")
        self.N = len(self.basis)

    @property
    def k(self) -> np.ndarray:
        return np.array([w.k for w in self.waves], dtype=float)

    @property
    def amps(self) -> np.ndarray:
        return np.array([w.amp for w in self.waves], dtype=float)

    @property
    def phases(self) -> np.ndarray:
        return np.array([w.phase for w in self.waves], dtype=float)

    def __call__(self, r):
        return evaluate(self, r)[0]

    def to_dict(self) -> dict:
        out = {"waves": [{"k": list(w.k), "amp": w.amp, "phase": w.phase} for w in self.waves]}
        if not np.array_equal(self.m, np.eye(len(self.waves), dtype=int)):
            out["basis"] = self.basis.tolist()
            out["m"] = self.m.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "QuasiPotential":
        waves = tuple(Wave(tuple(w["k"]), float(w["amp"]), float(w.get("phase", 0.0))) for w in data["waves"])
        return cls(waves, data.get("basis"), data.get("m"))


def evaluate(V: QuasiPotential, r):
    """Value and gradient at r (shape (2,) or (..., 2))."""
    r = np.asarray(r, dtype=float)
    arg = r @ V.k.T + V.phases
    val = np.cos(arg) @ V.amps
    grad = -(np.sin(arg) * V.amps) @ V.k
    return val, grad


def build_superposition(directions, periods, amplitudes=None, phases=None, n_required: int = None) -> QuasiPotential:
    """Waves a_j cos(2 pi / T_j  u_j . r + phi_j) along unit directions u_j."""
    u = np.asarray(directions, dtype=float)
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    n = len(u)
    if n not in (3, 4):
        raise ValueError("need 3 or 4 waves")
    if len(_direction_classes(u)) < n:
        raise ValueError("parallel wave directions")
    T = np.broadcast_to(np.asarray(periods, dtype=float), (n,))
    a = np.ones(n) if amplitudes is None else np.broadcast_to(np.asarray(amplitudes, float), (n,))
    ph = np.zeros(n) if phases is None else np.broadcast_to(np.asarray(phases, float), (n,))
    V = QuasiPotential(tuple(Wave(tuple(2 * np.pi / T[j] * u[j]), float(a[j]), float(ph[j])) for j in range(n)))
    if n_required is not None and V.N != n_required:
        raise ValueError(f"requested N={n_required}, got N={V.N}")
    return V


def directions_at(angles_deg) -> np.ndarray:
    t = np.deg2rad(np.asarray(angles_deg, dtype=float))
    return np.column_stack([np.cos(t), np.sin(t)])


def cyclotron_average(V: QuasiPotential, r_b: float) -> QuasiPotential:
    """Average over circles of radius r_b: each amplitude times J0(|k| r_b)."""
    if r_b < 0:
        raise ValueError("r_B must be non-negative")
    f = j0(np.linalg.norm(V.k, axis=1) * r_b)
    waves = tuple(Wave(w.k, float(w.amp * fj), w.phase) for w, fj in zip(V.waves, f))
    return QuasiPotential(waves, V.basis, V.m)


def circle_average(V: QuasiPotential, r, r_b: float, n: int = 4096) -> np.ndarray:
    """Direct angular quadrature of V over circles of radius r_b centred at r."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    t = 2 * np.pi * np.arange(n) / n
    ring = r_b * np.column_stack([np.cos(t), np.sin(t)])
    return np.array([V(c + ring).mean() for c in r])


# -- tracing: the plane is embedded as z = 0 with the field along z ----------

class _Scale:
    def __init__(self, length):
        self.cell_diameter = float(length)
        self.matrix = np.eye(3) * length


class PlanarField:
    """Duck-typed stand-in for a Dispersion, for the tracing kernel."""

    periodic = False
    quad = 0.0

    def __init__(self, V: QuasiPotential):
        self.V = V
        k = V.k
        self.wavevectors = np.column_stack([k, np.zeros(len(k))])
        self.amplitudes = V.amps
        self.phases = V.phases
        # the longest wave period plays the role of the cell size
        self.reciprocal = _Scale(2 * np.pi / np.linalg.norm(k, axis=1).min())
        self.lattice = _Scale(1.0)
        self.eps_min = -float(np.abs(V.amps).sum())
        self.eps_max = float(np.abs(V.amps).sum())

    def kernel_args(self):
        return (np.ascontiguousarray(self.wavevectors), self.amplitudes, self.phases, 0.0)


def trace_level_line(V: QuasiPotential, level: float, start, limits: TraceLimits = None, sense: int = 1) -> Trajectory:
    """Level line of V through `start`; uv coordinates are the plane coordinates r."""
    f = PlanarField(V)
    s = np.array([start[0], start[1], 0.0])
    return trace(f, level, np.array([0.0, 0.0, 1.0]), s, limits, sense, origin=np.zeros(3))


def project_to_level(V: QuasiPotential, level: float, r, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
    """Newton steps along the gradient from r onto {V = level}."""
    r = np.asarray(r, dtype=float)
    for _ in range(max_iter):
        v, g = evaluate(V, r)
        if abs(v - level) < tol:
            return r
        r = r - (v - level) * g / (g @ g)
    raise RuntimeError("start could not be projected on the level line")


def level_line_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["x", "y", "arc"])
    for (x, y), a in zip(traj.uv, traj.arc):
        wr.writerow([repr(float(x)), repr(float(y)), repr(float(a))])
    return buf.getvalue()


@dataclass
class LevelLineClass:
    kind: str                  # Closed / RegularOpen / Chaotic / Singular
    mean_dir: np.ndarray = None
    strip_width: float = None
    plane: tuple = None        # integer N-tuple (N = 4 regular lines)
    residual: float = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind,
                "mean_dir": None if self.mean_dir is None else [float(x) for x in self.mean_dir],
                "strip_width": self.strip_width,
                "plane": None if self.plane is None else list(self.plane),
                "residual": self.residual}


def _plane_frame_dir(traj: Trajectory, d2) -> np.ndarray:
    # uv of the planar trace are (x, y) up to the frame's e1/e2 choice
    d3 = d2[0] * traj.frame.e1 + d2[1] * traj.frame.e2
    return d3[:2] / np.linalg.norm(d3[:2])


def integral_hyperplane(V: QuasiPotential, mean_dir, m_max: int = 4, theta_tol: float = 1e-3) -> tuple:
    """Integer N-tuple M whose hyperplane {x : M . x = 0} contains the lifted direction.

    The lift of a planar direction d is K d, so the condition is
    (K^T M) . d = 0. Candidates within `theta_tol` are ranked by norm
    (L1, then lexicographic) and the smallest wins: with one direction the
    equation has many near-solutions at large |M|.
    """
    d = np.asarray(mean_dir, dtype=float)
    d = d / np.linalg.norm(d)
    Ms = irreducible_vectors(m_max, V.N)
    P = Ms @ V.basis                             # K^T M for every candidate
    nrm = np.linalg.norm(P, axis=1)
    ok = nrm > 1e-12
    res = np.full(len(Ms), np.pi / 2)
    res[ok] = np.arcsin(np.clip(np.abs(P[ok] @ d) / nrm[ok], 0.0, 1.0))
    hits = np.flatnonzero(res <= theta_tol)
    if len(hits) == 0:
        raise NoIntegralPlaneError(f"best residual {res.min():.3e} rad exceeds {theta_tol:.1e}")
    i = hits[0]
    return tuple(int(x) for x in Ms[i]), float(res[i])


def classify_level_line(traj: Trajectory, V: QuasiPotential, config: ClassifyConfig = None,
                        m_max: int = 4, theta_tol: float = 1e-3, extend_factor: float = 4.0,
                        max_extensions: int = 2) -> LevelLineClass:
    """Closed / RegularOpen / Chaotic / Singular for a traced level line.

    Open candidates that fail the strip test are retraced from the same start
    at extend_factor times the length (up to max_extensions times) before
    being called chaotic, since quasi-periodic strips fill their width slowly.
    """
    tc = classify(traj, detect_closure(traj), config=config)
    ext = 0
    while tc.kind in (Kind.ChaoticDirected, Kind.ChaoticWandering) and ext < max_extensions:
        ext += 1
        lim = TraceLimits(max_len=traj.length * extend_factor ** ext, max_steps=50_000_000)
        tr = trace_level_line(V, traj.level, traj.points[0][:2], lim)
        tc = classify(tr, detect_closure(tr), config=config)
        if tc.kind not in (Kind.ChaoticDirected, Kind.ChaoticWandering):
            traj = tr
    diag = dict(tc.diagnostics)
    if tc.kind == Kind.Closed:
        return LevelLineClass("Closed", diagnostics=diag)
    if tc.kind == Kind.Singular:
        return LevelLineClass("Singular", diagnostics=diag)
    if tc.kind == Kind.RegularOpen:
        d = _plane_frame_dir(traj, tc.mean_dir)
        out = LevelLineClass("RegularOpen", d, tc.strip_width, diagnostics=diag)
        if V.N == 4:
            out.plane, out.residual = integral_hyperplane(V, d, m_max, theta_tol)
        return out
    d = None if tc.mean_dir is None else _plane_frame_dir(traj, tc.mean_dir)
    diag["subkind"] = tc.kind.value
    return LevelLineClass("Chaotic", d, tc.strip_width, diagnostics=diag)


# -- N = 3: equivalence with the magnetic problem ---------------------------

@dataclass
class Lift3:
    dispersion: Dispersion     # F(x) = sum a_j cos(m_j . x + phi_j) on the unit-cube lattice
    b: np.ndarray              # normal of the embedded plane
    basis: np.ndarray          # K (3 x 2)

    def to_space(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r @ self.basis.T

    def to_plane_dir(self, d3) -> np.ndarray:
        d = np.linalg.lstsq(self.basis, np.asarray(d3, float), rcond=None)[0]
        return d / np.linalg.norm(d)


def lift3(V: QuasiPotential) -> Lift3:
    """The 3-periodic function and plane whose section reproduces V."""
    if V.N != 3:
        raise ValueError("lift3 needs N = 3")
    terms = tuple(Term(tuple(int(x) for x in m), a, ph) for m, a, ph in zip(V.m, V.amps, V.phases))
    d = Dispersion(terms, name="quasi_lift")
    K = V.basis
    b = np.cross(K[:, 0], K[:, 1])
    return Lift3(d, b / np.linalg.norm(b), K)


def potential_json(V: QuasiPotential) -> str:
    return json.dumps(V.to_dict(), sort_keys=True, indent=1)
