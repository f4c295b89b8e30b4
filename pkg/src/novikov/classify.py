"""Topological classification of traced trajectories and quantum-number recovery."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import gcd

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .flow import ClosureKind, ClosureResult, Termination, Trajectory
from .lattice import DirectLattice, ReciprocalLattice, reciprocal_basis


class Kind(enum.Enum):
    Closed = "Closed"
    PeriodicOpen = "PeriodicOpen"
    RegularOpen = "RegularOpen"
    ChaoticDirected = "ChaoticDirected"
    ChaoticWandering = "ChaoticWandering"
    Singular = "Singular"


class InconclusiveError(RuntimeError):
    """Trace too short to classify an open candidate."""


class NoIntegralPlaneError(RuntimeError):
    pass


DEGENERATE_SIN = 1e-2


@dataclass
class ClassifyConfig:
    min_len_cells: float = 50.0     # open candidates need this many cell diameters
    w_max_cells: float = 3.0        # strip width bound
    width_growth_tol: float = 0.05  # relative growth allowed under doubling
    dir_tol: float = 2e-2           # rad; direction convergence under doubling
    width_abs_tol_cells: float = 1e-2   # absolute slack: quasi-periodic strips fill their sup width slowly


@dataclass
class TrajectoryClass:
    kind: Kind
    mean_dir: np.ndarray = None     # unit 2-vector in the plane frame
    mean_dir3: np.ndarray = None    # same direction in momentum space
    strip_width: float = None
    q: tuple = None
    diagnostics: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "kind": self.kind.value,
            "mean_dir": None if self.mean_dir3 is None else [float(x) for x in self.mean_dir3],
            "strip_width": self.strip_width,
            "q": None if self.q is None else [float(x) for x in self.q],
        }


def tls_direction(uv: np.ndarray, arc: np.ndarray = None) -> np.ndarray:
    """Principal axis of the point cloud, weighted by arc length when given."""
    uv = np.asarray(uv, dtype=float)
    if arc is not None and len(arc) > 2:
        w = np.gradient(np.asarray(arc, dtype=float))
        w = np.clip(w, 0, None)
        w = w / w.sum()
    else:
        w = np.full(len(uv), 1.0 / len(uv))
    c = uv - w @ uv
    cov = (c * w[:, None]).T @ c
    vals, vecs = np.linalg.eigh(cov)
    d = vecs[:, -1]
    # orient along the direction of travel
    if np.dot(uv[-1] - uv[0], d) < 0:
        d = -d
    return d


def strip_fit(uv) -> tuple:
    """Direction minimising the perpendicular extent, and that extent.

    Rotating calipers over the convex hull; the returned direction is the
    strip axis (parallel to the hull edge that attains the minimal width),
    oriented along travel.
    """
    uv = np.asarray(uv, dtype=float)
    if len(uv) < 3:
        d = uv[-1] - uv[0]
        return d / np.linalg.norm(d), 0.0
    try:
        hull = ConvexHull(uv)
        pts = uv[hull.vertices]
    except QhullError:
        # collinear input: degenerate strip
        d = tls_direction(uv)
        perp = np.array([-d[1], d[0]])
        s = uv @ perp
        return d, float(s.max() - s.min())
    edges = np.roll(pts, -1, axis=0) - pts
    lens = np.linalg.norm(edges, axis=1)
    keep = lens > 0
    dirs = edges[keep] / lens[keep, None]
    normals = np.column_stack([-dirs[:, 1], dirs[:, 0]])
    proj = pts @ normals.T
    widths = proj.max(axis=0) - proj.min(axis=0)
    i = int(np.argmin(widths))
    d = dirs[i]
    if np.dot(uv[-1] - uv[0], d) < 0:
        d = -d
    return d, float(widths[i])


def _angle(d1, d2) -> float:
    """Unsigned angle between two lines (direction sign ignored)."""
    c = abs(float(np.dot(d1, d2)) / (np.linalg.norm(d1) * np.linalg.norm(d2)))
    return float(np.arccos(min(1.0, c)))


def classify(traj: Trajectory, closure: ClosureResult, lattice: ReciprocalLattice = None,
             config: ClassifyConfig = None) -> TrajectoryClass:
    """Closed / PeriodicOpen pass through; open traces are judged by strip convergence.

    A regular strip keeps its width and direction as the trace length
    doubles (checked over the last two doublings); a Tsarev-type trace
    keeps its direction but keeps widening; a Dynnikov-type trace has
    neither.
    """
    config = config or ClassifyConfig()
    lattice = lattice or traj.dispersion.reciprocal
    cell = lattice.cell_diameter
    fr = traj.frame
    if traj.termination in (Termination.SingularStop, Termination.NewtonStall):
        return TrajectoryClass(Kind.Singular, diagnostics={"termination": traj.termination.name})
    if closure.kind == ClosureKind.Closed:
        return TrajectoryClass(Kind.Closed, diagnostics={"orientation": closure.orientation.value,
                                                         "period": traj.period})
    if closure.kind == ClosureKind.PeriodicOpen:
        q = np.asarray(closure.q)
        q2 = fr.to_plane(fr.origin + q)
        d2 = q2 / np.linalg.norm(q2)
        _, width = strip_fit(traj.uv)
        return TrajectoryClass(Kind.PeriodicOpen, d2, q / np.linalg.norm(q), width, tuple(closure.q))
    if traj.length < config.min_len_cells * cell:
        raise InconclusiveError(f"trace length {traj.length:.1f} < {config.min_len_cells * cell:.1f}")

    uv = traj.uv
    # prefixes at L/4, L/2, L: a strip is certified only if it holds over two doublings
    cut = [int(np.searchsorted(traj.arc, traj.arc[-1] * f)) + 1 for f in (0.25, 0.5)]
    widths = [strip_fit(uv[:c])[1] for c in cut] + [strip_fit(uv)[1]]
    d_full = tls_direction(uv, traj.arc)
    d_half = tls_direction(uv[:cut[1]], traj.arc[:cut[1]])
    w_full = widths[-1]
    perp = np.array([-d_full[1], d_full[0]])
    along = (uv - uv[0]) @ d_full
    across = (uv - uv[0]) @ perp
    diag = {
        "width_quarter": widths[0], "width_half": widths[1], "width_full": w_full,
        "dir_change": _angle(d_full, d_half),
        "along_extent": float(np.ptp(along)), "across_extent": float(np.ptp(across)),
        "net_displacement": float(np.linalg.norm(uv[-1] - uv[0])),
    }
    dir_ok = diag["dir_change"] < config.dir_tol
    width_ok = w_full <= widths[0] * (1.0 + config.width_growth_tol) + config.width_abs_tol_cells * cell
    d3 = d_full[0] * fr.e1 + d_full[1] * fr.e2
    if dir_ok and width_ok and w_full < config.w_max_cells * cell:
        return TrajectoryClass(Kind.RegularOpen, d_full, d3, w_full, diagnostics=diag)
    # a directed trace drifts linearly along its axis and far less across it
    drift = diag["net_displacement"] / max(traj.length, 1e-300)
    if dir_ok and diag["along_extent"] > 3.0 * diag["across_extent"] and drift > 0.05:
        return TrajectoryClass(Kind.ChaoticDirected, d_full, d3, w_full, diagnostics=diag)
    return TrajectoryClass(Kind.ChaoticWandering, diagnostics=diag)


@dataclass(frozen=True)
class QuantumNumbers:
    M: tuple
    residual: float


@dataclass(frozen=True)
class IntegralPlane:
    normal: tuple                   # unit normal in momentum space
    span: tuple                     # two reciprocal-lattice vectors spanning the plane


def normalize_triple(m) -> tuple:
    m = [int(x) for x in m]
    g = 0
    for x in m:
        g = gcd(g, abs(x))
    if g == 0:
        raise ValueError("zero triple")
    m = [x // g for x in m]
    for x in m:
        if x != 0:
            if x < 0:
                m = [-y for y in m]
            break
    return tuple(m)


@lru_cache(maxsize=None)
def irreducible_vectors(m_max: int, dim: int = 3) -> np.ndarray:
    """All irreducible integer vectors with |m_i| <= m_max, first nonzero positive,
    ordered by (L1 norm, lexicographic)."""
    r = np.arange(-m_max, m_max + 1)
    grids = np.stack(np.meshgrid(*([r] * dim), indexing="ij"), -1).reshape(-1, dim)
    out = []
    for m in grids:
        if not m.any():
            continue
        g = np.gcd.reduce(np.abs(m))
        if g != 1:
            continue
        nz = m[np.flatnonzero(m)[0]]
        if nz < 0:
            continue
        out.append(m)
    out = np.array(out)
    order = np.lexsort(tuple(out[:, ::-1].T) + (np.abs(out).sum(1),))
    return out[order]


def integral_plane(M, lattice: DirectLattice) -> IntegralPlane:
    """Reciprocal-lattice plane orthogonal to n = M1 l1 + M2 l2 + M3 l3."""
    M = np.asarray(M)
    n = M @ lattice.matrix
    n = n / np.linalg.norm(n)
    # reciprocal vectors q = sum m_i a_i lie in the plane iff sum m_i M_i = 0
    A = reciprocal_basis(lattice).matrix
    cands = [v for v in irreducible_vectors(max(2, int(np.abs(M).max()) + 1)) if int(v @ M) == 0]
    q1 = cands[0]
    q2 = next(v for v in cands[1:] if np.linalg.norm(np.cross(q1 @ A, v @ A)) > 1e-9)
    return IntegralPlane(tuple(n), (tuple(q1 @ A), tuple(q2 @ A)))


def recover_quantum_numbers(records, lattice: DirectLattice = None, m_max: int = 8,
                            theta_tol: float = 1e-3) -> tuple:
    """Integer triple whose plane Gamma reproduces all measured mean directions.

    `records` is a list of (b, mean_dir) with 3-vectors. For a candidate M
    the predicted direction at b is b x n with n = sum M_i l_i; the score
    is the worst angle over records.
    """
    lattice = lattice or DirectLattice()
    records = [(np.asarray(b, float) / np.linalg.norm(b), np.asarray(d, float) / np.linalg.norm(d))
               for b, d in records]
    if len(records) < 2:
        raise ValueError("need at least two records")
    bs = np.array([r[0] for r in records])
    if np.linalg.matrix_rank(bs, tol=1e-9) < 2:
        raise ValueError("need non-parallel field directions")
    ds = np.array([r[1] for r in records])
    Ms = irreducible_vectors(m_max)
    N = Ms @ lattice.matrix
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    worst = np.zeros(len(Ms))
    for b, d in zip(bs, ds):
        pred = np.cross(b, N)
        nrm = np.linalg.norm(pred, axis=1)
        # normals almost parallel to b leave b x n undetermined
        ok = nrm > DEGENERATE_SIN
        # angle between lines via atan2: arccos loses half the digits near 0
        u = pred / np.where(ok, nrm, 1.0)[:, None]
        ang = np.arctan2(np.linalg.norm(np.cross(u, d), axis=1), np.abs(u @ d))
        ang[~ok] = np.pi / 2
        worst = np.maximum(worst, ang)
    i = int(np.argmin(worst))
    if worst[i] > theta_tol:
        raise NoIntegralPlaneError(f"best residual {worst[i]:.3e} rad exceeds {theta_tol:.1e}")
    M = normalize_triple(Ms[i])
    return QuantumNumbers(M, float(worst[i])), integral_plane(M, lattice)


def classification_record(cls: TrajectoryClass, qn: QuantumNumbers = None) -> str:
    rec = cls.to_record()
    rec["M"] = None if qn is None else list(qn.M)
    rec["residual"] = None if qn is None else qn.residual
    return json.dumps(rec, sort_keys=True)
