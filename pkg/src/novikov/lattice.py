"""Direct/reciprocal lattices and 3-periodic dispersion relations.

Reduced units throughout: hbar = e = c = 1. Momenta live in the covering
space R^3; reduction to the torus R^3 / L* is left to callers.

A dispersion is a finite cosine series

    eps(p) = sum_j amp_j * cos(k_j . p + phase_j) + quad/2 * |p|^2

with wavevectors k_j = m_j1 l1 + m_j2 l2 + m_j3 l3 taken from the direct
lattice, so eps(p + a_i) = eps(p) holds exactly for every reciprocal basis
vector a_i. The optional quadratic term (free-electron toy model) breaks
periodicity and is only used for validation runs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

TWO_PI = 2.0 * np.pi


class DegenerateLatticeError(ValueError):
    pass


@dataclass(frozen=True)
class DirectLattice:
    l1: tuple = (1.0, 0.0, 0.0)
    l2: tuple = (0.0, 1.0, 0.0)
    l3: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        for name in ("l1", "l2", "l3"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        if abs(self.volume) < 1e-12 * max(1.0, np.abs(self.matrix).max() ** 3):
            raise DegenerateLatticeError("direct basis is degenerate (triple product ~ 0)")

    @property
    def matrix(self) -> np.ndarray:
        """Rows are l1, l2, l3."""
        return np.array([self.l1, self.l2, self.l3])

    @property
    def volume(self) -> float:
        return float(np.linalg.det(np.array([self.l1, self.l2, self.l3])))


@dataclass(frozen=True)
class ReciprocalLattice:
    a1: tuple
    a2: tuple
    a3: tuple

    @property
    def matrix(self) -> np.ndarray:
        """Rows are a1, a2, a3."""
        return np.array([self.a1, self.a2, self.a3])

    @property
    def cell_volume(self) -> float:
        return abs(float(np.linalg.det(self.matrix)))

    @property
    def cell_diameter(self) -> float:
        """Longest diagonal of the reciprocal cell."""
        A = self.matrix
        diags = [A[0] + A[1] + A[2], A[0] + A[1] - A[2], A[0] - A[1] + A[2], -A[0] + A[1] + A[2]]
        return float(max(np.linalg.norm(d) for d in diags))

    def vector(self, m) -> np.ndarray:
        return np.asarray(m, dtype=float) @ self.matrix


def reciprocal_basis(direct: DirectLattice) -> ReciprocalLattice:
    l1, l2, l3 = (np.asarray(v) for v in (direct.l1, direct.l2, direct.l3))
    vol = float(np.dot(l1, np.cross(l2, l3)))
    if abs(vol) < 1e-12:
        raise DegenerateLatticeError("direct basis is degenerate (triple product ~ 0)")
    a1 = TWO_PI * np.cross(l2, l3) / vol
    a2 = TWO_PI * np.cross(l3, l1) / vol
    a3 = TWO_PI * np.cross(l1, l2) / vol
    return ReciprocalLattice(tuple(a1), tuple(a2), tuple(a3))


@dataclass(frozen=True)
class Term:
    m: tuple
    amp: float
    phase: float = 0.0


@dataclass(frozen=True, eq=False)
class Dispersion:
    terms: tuple
    lattice: DirectLattice = field(default_factory=DirectLattice)
    quad: float = 0.0
    name: str = "custom"
    eps_min: float = field(init=False)
    eps_max: float = field(init=False)

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        terms = tuple(Term(tuple(int(x) for x in t.m), float(t.amp), float(t.phase)) for t in terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "quad", float(self.quad))
        lo, hi = _estimate_bounds(self)
        object.__setattr__(self, "eps_min", lo)
        object.__setattr__(self, "eps_max", hi)

    # arrays consumed by the numba kernels
    @property
    def wavevectors(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, 3))
        m = np.array([t.m for t in self.terms], dtype=float)
        return m @ self.lattice.matrix

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([t.amp for t in self.terms], dtype=float)

    @property
    def phases(self) -> np.ndarray:
        return np.array([t.phase for t in self.terms], dtype=float)

    @property
    def reciprocal(self) -> ReciprocalLattice:
        return reciprocal_basis(self.lattice)

    @property
    def periodic(self) -> bool:
        return self.quad == 0.0

    def kernel_args(self):
        return (np.ascontiguousarray(self.wavevectors), self.amplitudes, self.phases, self.quad)

    def __call__(self, p):
        return evaluate(self, p)[0]

    def __eq__(self, other):
        return (isinstance(other, Dispersion) and self.terms == other.terms
                and self.lattice == other.lattice and self.quad == other.quad)

    def __hash__(self):
        return hash((self.terms, self.lattice, self.quad))

    def to_json(self) -> str:
        return json.dumps(dispersion_to_dict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Dispersion":
        return dispersion_from_dict(json.loads(text))


def evaluate(d: Dispersion, p):
    """Energy and exact analytic gradient (group velocity) at p.

    `p` may have shape (3,) or (..., 3).
    """
    p = np.asarray(p, dtype=float)
    K = d.wavevectors
    arg = p @ K.T + d.phases
    amp = d.amplitudes
    energy = np.cos(arg) @ amp
    grad = -(np.sin(arg) * amp) @ K
    if d.quad:
        energy = energy + 0.5 * d.quad * np.sum(p * p, axis=-1)
        grad = grad + d.quad * p
    return energy, grad


def _estimate_bounds(d: Dispersion, n: int = 24):
    """Dense sampling over one cell plus local refinement of the extremes."""
    if not d.terms and d.quad == 0.0:
        return 0.0, 0.0
    A = reciprocal_basis(d.lattice).matrix
    g = (np.arange(n) + 0.5) / n
    f = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    if d.quad:
        # free-electron toy: bounded below only; sample a box around the origin
        p = (f - 0.5) @ A
    else:
        p = f @ A
    e = evaluate(d, p)[0]

    def refine(p0, sign):
        res = minimize(lambda x: sign * evaluate(d, x)[0], p0,
                       jac=lambda x: sign * evaluate(d, x)[1], method="BFGS",
                       options={"gtol": 1e-12})
        return sign * res.fun

    lo = min(float(e.min()), refine(p[np.argmin(e)], 1.0))
    if d.quad > 0:
        return lo, float("inf")
    hi = max(float(e.max()), refine(p[np.argmax(e)], -1.0))
    return lo, hi


class UnknownPresetError(KeyError):
    pass


def preset(name: str, **params) -> Dispersion:
    """Named dispersions.

    tight_binding        cos p1 + cos p2 + cos p3 (unit cube), eps in [-3, 3]
    corrugated_cylinder  cos p1 + delta (cos p2 + cos p3), default delta=0.1;
                         quasi-1D warped sheets, open orbits along the sheets
    tsarev_like          horizontal sheets joined by tilted necks whose centres
                         lie in a vertical plane of irrational direction,
                         see ``tsarev_like`` below
    free_electron        |p|^2 / 2 m (non-periodic toy; circular orbits)
    custom               terms=[(m, amp, phase), ...], lattice=DirectLattice
    """
    if name == "tight_binding":
        t = params.get("t", 1.0)
        return Dispersion(((( 1, 0, 0), t, 0.0), ((0, 1, 0), t, 0.0), ((0, 0, 1), t, 0.0)),
                          name="tight_binding")
    if name == "corrugated_cylinder":
        delta = params.get("delta", 0.1)
        return Dispersion((((1, 0, 0), 1.0, 0.0), ((0, 1, 0), delta, 0.0), ((0, 0, 1), delta, 0.0)),
                          name="corrugated_cylinder")
    if name == "tsarev_like":
        return tsarev_like(**params)
    if name == "free_electron":
        mass = params.get("mass", 1.0)
        return Dispersion((), quad=1.0 / mass, name="free_electron")
    if name == "custom":
        lattice = params.get("lattice", DirectLattice())
        if not isinstance(lattice, DirectLattice):
            lattice = DirectLattice(*lattice)
        return Dispersion(tuple(params["terms"]), lattice=lattice, quad=params.get("quad", 0.0))
    raise UnknownPresetError(name)


GOLDEN_ANGLE = float(np.arctan((1.0 + np.sqrt(5.0)) / 2.0))


def fourier_series(f, shape=(16, 16, 32), tol: float = 1e-9, lattice: DirectLattice = None,
                   name: str = "custom") -> Dispersion:
    """Finite cosine series of a smooth function given in fractional angles.

    `f(x1, x2, x3)` is 2pi-periodic in each argument, with x_i = p . l_i for the
    direct basis. Coefficients below `tol` are dropped; the grid must resolve
    the bandwidth of f (aliasing is not checked).
    """
    g = [np.arange(k) * TWO_PI / k for k in shape]
    F = np.fft.fftn(f(*np.meshgrid(*g, indexing="ij"))) / np.prod(shape)
    terms = []
    for idx in zip(*np.nonzero(np.abs(F) > tol)):
        m = tuple(int(i if i <= k // 2 else i - k) for i, k in zip(idx, shape))
        if tuple(-x for x in m) < m:
            continue  # conjugate partner already kept
        c = F[idx]
        if m == (0, 0, 0):
            terms.append(Term(m, float(c.real), 0.0))
        else:
            terms.append(Term(m, float(2.0 * abs(c)), float(np.angle(c))))
    return Dispersion(tuple(terms), lattice=lattice or DirectLattice(), name=name)


def tsarev_like(depth: float = 1.5, tilt: float = 1.5, angle: float = GOLDEN_ANGLE,
                offset: float = 1.0) -> Dispersion:
    """Horizontal sheets joined by tilted necks, smoothed into a cosine series.

    eps = cos p3 gives flat sheets p3 = +-pi/2 at eps = 0. A dip of depth
    `depth` punches a neck through the slab |p3| < pi/2 and a bump punches
    one through the slab around p3 = pi; both necks lean by `tilt` along the
    horizontal direction alpha = (cos angle, sin angle, 0) and their centres
    are `offset` apart along alpha, so every neck centre lies in one vertical
    plane through alpha. For the field ``tsarev_field(angle)`` (horizontal,
    orthogonal to alpha) the eps = 0 trajectories climb from sheet to sheet
    with a fixed asymptotic direction, while the irrational alpha keeps the
    perpendicular spread growing (slowly, roughly logarithmically).

    Bring-up (24 traces of 400 reciprocal-cell diameters, random planes):
    all ChaoticDirected under the default classifier.
    """
    al = np.array([np.cos(angle), np.sin(angle)])
    c2 = offset * al

    def f(p1, p2, p3):
        sh = tilt * np.sin(p3)
        b1 = (1 + np.cos(p1 - al[0] * sh)) * (1 + np.cos(p2 - al[1] * sh)) / 4
        b2 = (1 + np.cos(p1 - c2[0] + al[0] * sh)) * (1 + np.cos(p2 - c2[1] + al[1] * sh)) / 4
        return np.cos(p3) - depth * b1 * (1 + np.cos(p3)) / 2 + depth * b2 * (1 - np.cos(p3)) / 2

    return fourier_series(f, name="tsarev_like")


def tsarev_field(angle: float = GOLDEN_ANGLE) -> np.ndarray:
    """Documented field direction for ``tsarev_like``: horizontal, orthogonal to alpha."""
    return np.array([-np.sin(angle), np.cos(angle), 0.0])


def dispersion_to_dict(d: Dispersion) -> dict:
    out = {
        "lattice": [list(d.lattice.l1), list(d.lattice.l2), list(d.lattice.l3)],
        "terms": [{"m": list(t.m), "amp": t.amp, "phase": t.phase} for t in d.terms],
    }
    if d.quad:
        out["quad"] = d.quad
    return out


def dispersion_from_dict(data: dict) -> Dispersion:
    lat = DirectLattice(*[tuple(r) for r in data.get("lattice", np.eye(3).tolist())])
    terms = tuple(Term(tuple(t["m"]), t["amp"], t.get("phase", 0.0)) for t in data["terms"])
    return Dispersion(terms, lattice=lat, quad=data.get("quad", 0.0), name=data.get("name", "custom"))
