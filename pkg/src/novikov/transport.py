"""Relaxation-time conductivity on traced trajectories and its strong-field scaling.

Chambers form: sigma^{ik} ~ int dS/|grad eps| v^i(p) int_0^inf v^k(p(-s)) e^{-s/tau} ds.

The surface measure dmu = dS/|grad eps| factorises as dt dp_z along
trajectories, so each quadrature sample can be replaced by the time
average of v^i I^k over its own orbit (one period for closed or periodic
orbits, a long window after a 20 tau warm-up for open ones) without
changing the integral. In-plane velocity integrals are exact polyline
increments: v_perp dt = b x dp.

Reduced units: omega_B = 1 so tau (in trace time) equals omega_B tau.
Tensors are normalised by tau * S1 with S1 = int dmu |v|^2 / 3, the
zero-field isotropic weight, i.e. they come out in units of n e^2 tau / m*.
"""
from __future__ import annotations

import io
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .flow import Termination, TraceLimits, plane_frame, trace
from .lattice import Dispersion, evaluate
from .parallel import pmap
from .zkf import envelope_slope

WARMUP_TAU = 20.0
LINE_OFFSET = ((3.0 - 5.0 ** 0.5) / 2.0, 2.0 ** 0.5 - 1.0)


class UnresolvedError(RuntimeError):
    """Too much Fermi-surface measure sits on singular trajectories."""


@dataclass
class FermiSamples:
    p: np.ndarray              # (n, 3) points on the level
    w: np.ndarray              # (n,) quadrature weights for dS / |grad eps|
    line: np.ndarray           # (n,) index of the quadrature line (for split-half errors)


def fermi_samples(d: Dispersion, level: float, n_lines: int = 12, n_grid: int = 64,
                  box=None, origin=None) -> FermiSamples:
    """Line-root quadrature of int delta(eps - level) f d^3p over one cell.

    For each cell edge a_i, lines parallel to a_i through an N x N midpoint
    grid of the other two fractional coordinates are intersected with the
    level. A root on an a_i-line carries V / N^2 * |g.a_i| / sum_j (g.a_j)^2,
    a partition of unity over the three families that never divides by a
    grazing |g.a_i|. The N x N grid is shifted by incommensurate offsets.
    Non-periodic toy dispersions need an explicit `box`.
    """
    if box is None:
        if not d.periodic:
            raise ValueError("non-periodic dispersion needs an explicit box")
        A = d.reciprocal.matrix
        origin = np.zeros(3) if origin is None else np.asarray(origin, float)
    else:
        A = np.asarray(box, dtype=float)
        origin = np.zeros(3) if origin is None else np.asarray(origin, float)
    vol = abs(np.linalg.det(A))
    N = n_lines
    # irrational offset: a symmetric midpoint grid lands exactly on the
    # measure-zero separatrix sections of symmetric dispersions
    gj = (np.arange(N) + LINE_OFFSET[0]) / N
    gk = (np.arange(N) + LINE_OFFSET[1]) / N
    t = np.arange(n_grid + 1) / n_grid
    P, W, Lid = [], [], []
    for i in range(3):
        j, k = [x for x in range(3) if x != i]
        xj, xk = np.meshgrid(gj, gk, indexing="ij")
        base = origin + xj.reshape(-1, 1) * A[j] + xk.reshape(-1, 1) * A[k]      # (N^2, 3)
        pts = base[:, None, :] + t[None, :, None] * A[i][None, None, :]
        f = evaluate(d, pts)[0] - level
        sgn = np.sign(f)
        li, ti = np.nonzero(sgn[:, :-1] * sgn[:, 1:] < 0)
        lo, hi = t[ti], t[ti + 1]
        flo = f[li, ti]
        # vectorised bisection on each bracket
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = evaluate(d, base[li] + mid[:, None] * A[i])[0] - level
            left = np.sign(fm) == np.sign(flo)
            lo = np.where(left, mid, lo)
            flo = np.where(left, fm, flo)
            hi = np.where(left, hi, mid)
        p = base[li] + (0.5 * (lo + hi))[:, None] * A[i]
        grad = evaluate(d, p)[1]
        ga = grad @ A.T
        w = vol / N ** 2 * np.abs(ga[:, i]) / np.sum(ga * ga, axis=1)
        P.append(p)
        W.append(w)
        Lid.append(li + i * N * N)
    return FermiSamples(np.concatenate(P), np.concatenate(W), np.concatenate(Lid))


@dataclass
class SampleResult:
    X: np.ndarray              # (ntau, 3, 3) orbit-averaged v^i I^k, lab frame
    kind: str                  # closed / periodic / open / singular
    orientation: int           # sign of the orbit's signed area (closed only)
    period: float
    drift: np.ndarray = None   # net momentum displacement of the trace


def _orbit_integrals(d, level, b, p, taus, limits, window_tau, gmax):
    """Time-average of v^i(t) I^k(t) over the orbit through p, for every tau.

    `gmax` bounds |grad eps| so that an arc of gmax * t lasts at least t.
    """
    taus = np.asarray(taus, dtype=float)
    t_need = (WARMUP_TAU + window_tau) * taus.max()
    lim = TraceLimits(**{**limits.__dict__})
    lim.max_len = max(limits.max_len, gmax * t_need)
    tr = trace(d, level, b, p, lim)
    term = tr.termination
    if term in (Termination.SingularStop, Termination.NewtonStall, Termination.StepLimit) or len(tr) < 3:
        return SampleResult(np.zeros((len(taus), 3, 3)), "singular", 0, float(tr.period), np.zeros(3))
    pts = tr.points
    bb = tr.frame.b
    dp = np.diff(pts, axis=0)
    inc = np.cross(bb, dp)                       # exact int v_perp dt over each segment
    vel = evaluate(d, pts)[1]
    vb = np.outer(vel @ bb, bb)                  # along-field velocity at the nodes
    dt = np.diff(tr.time)
    periodic = term in (Termination.ClosedReturn, Termination.PeriodClose)
    I = kern.exp_filter_periodic(dt, np.ascontiguousarray(inc), np.ascontiguousarray(vb), taus, periodic)
    if periodic:
        lo = 0
    else:
        # drop the warm-up for the longest tau; average over the rest
        lo = int(np.searchsorted(tr.time, WARMUP_TAU * taus.max()))
        lo = min(lo, len(dt) - 1)
    T = tr.time[-1] - tr.time[lo]
    X = np.empty((len(taus), 3, 3))
    for k in range(len(taus)):
        Ik = I[k]
        Imid = 0.5 * (Ik[lo:-1] + Ik[lo + 1:])                     # (nseg, 3)
        perp = inc[lo:].T @ Imid                                     # in-plane v^i dt exactly
        par = 0.5 * ((vb[lo:-1].T * dt[lo:]) @ Ik[lo:-1] + (vb[lo + 1:].T * dt[lo:]) @ Ik[lo + 1:])
        X[k] = (perp + par) / T
    kind = {Termination.ClosedReturn: "closed", Termination.PeriodClose: "periodic"}.get(term, "open")
    orient = 0
    if term == Termination.ClosedReturn:
        uv = tr.uv
        orient = int(np.sign(np.sum(uv[:-1, 0] * uv[1:, 1] - uv[1:, 0] * uv[:-1, 1])))
    return SampleResult(X, kind, orient, float(tr.period), pts[-1] - pts[0])


def _work(args):
    return _orbit_integrals(*args)


@dataclass
class ConductivityTensor:
    omega_tau: float
    sigma: np.ndarray          # (3, 3) in units n e^2 tau / m*, in the `axes` frame
    raw: np.ndarray            # (3, 3) int dmu v^i I^k in the axes frame (unnormalised)
    err: np.ndarray            # (3, 3) split-half quadrature error estimate of sigma
    axes: np.ndarray           # rows: x, y, z directions in momentum space (z = b)
    s1: float
    unresolved: float          # fraction of measure on singular trajectories
    census: dict = field(default_factory=dict)

    def hall_physical(self, b_mag: float = 1.0) -> float:
        """sigma^{xy} in reduced physical units 2/((2 pi)^3 B) * raw^{xy}."""
        return 2.0 * self.raw[0, 1] / ((2 * np.pi) ** 3 * b_mag)

    @property
    def symmetric(self):
        return 0.5 * (self.sigma + self.sigma.T)

    @property
    def antisymmetric(self):
        return 0.5 * (self.sigma - self.sigma.T)


def default_axes(b, x_dir=None) -> np.ndarray:
    """Rows (x, y, z) with z = b; x along `x_dir` projected into the plane, else e1."""
    fr = plane_frame(b)
    z = fr.b
    if x_dir is None:
        x = fr.e1
    else:
        x = np.asarray(x_dir, dtype=float)
        x = x - (x @ z) * z
        x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.array([x, y, z])


def _mean_open_direction(res, w):
    """Weighted mean direction of non-closed orbits (sign-aligned), or None."""
    acc, ref = np.zeros(3), None
    for r, wi in zip(res, w):
        if r.kind not in ("periodic", "open"):
            continue
        n = np.linalg.norm(r.drift)
        if n == 0:
            continue
        u = r.drift / n
        if ref is None:
            ref = u
        acc += wi * (u if u @ ref >= 0 else -u)
    if ref is None or np.linalg.norm(acc) == 0:
        return None
    return acc / np.linalg.norm(acc)


def chambers_ladder(d: Dispersion, level: float, b, omega_taus, n_lines: int = 12,
                    limits: TraceLimits = None, window_tau: float = 10.0, axes=None,
                    carrier: str = None, workers: int = None, box=None, origin=None,
                    max_unresolved: float = 0.05) -> list:
    """Conductivity tensors for every omega_B tau in the ladder, from one set of traces.

    `carrier` restricts the sum to samples whose orbit kind is in
    {"closed", "periodic", "open"} (comma-separated), e.g. "open" for the
    contribution of non-closed carriers. Without explicit `axes` the frame
    is (x, b x x, b) with x the mean direction of open orbits in momentum
    space when there are any.
    """
    b = np.asarray(b, dtype=float)
    b = b / np.linalg.norm(b)
    taus = np.asarray(omega_taus, dtype=float)
    if np.any(taus <= 0):
        raise ValueError("omega_B tau must be positive")
    limits = limits or TraceLimits(max_len=2000.0, max_steps=5_000_000)
    fs = fermi_samples(d, level, n_lines, box=box, origin=origin)
    if len(fs.w) == 0:
        raise ValueError("empty Fermi surface")
    vel = evaluate(d, fs.p)[1]
    if d.periodic:
        gmax = float(np.abs(d.amplitudes) @ np.linalg.norm(d.wavevectors, axis=1))
    else:
        gmax = 2.0 * float(np.max(np.linalg.norm(vel, axis=1)))
    res = pmap(_work, [(d, level, b, p, taus, limits, window_tau, gmax) for p in fs.p], workers)
    kinds = np.array([r.kind for r in res])
    wsum = fs.w.sum()
    sing = kinds == "singular"
    unresolved = float(fs.w[sing].sum() / wsum)
    if unresolved > max_unresolved:
        raise UnresolvedError(f"{unresolved:.1%} of the Fermi-surface measure is singular")
    s1 = float(np.sum(fs.w * np.einsum("ij,ij->i", vel, vel)) / 3.0)
    keep = ~sing
    if carrier:
        keep &= np.isin(kinds, carrier.split(","))
    if axes is None:
        R = default_axes(b, _mean_open_direction(res, fs.w))
    else:
        R = np.asarray(axes, dtype=float)
    Xall = np.stack([r.X for r in res])          # (n, ntau, 3, 3)
    census = {k: float(fs.w[kinds == k].sum() / wsum) for k in ("closed", "periodic", "open", "singular")}
    closed = kinds == "closed"
    if closed.any():
        ori = np.array([r.orientation for r in res])
        census["closed_electron"] = float(fs.w[closed & (ori < 0)].sum() / wsum)
        census["closed_hole"] = float(fs.w[closed & (ori > 0)].sum() / wsum)
    even = (fs.line % 2) == 0
    out = []
    for k, tau in enumerate(taus):
        def total(mask):
            X = np.einsum("n,nij->ij", fs.w * mask, Xall[:, k])
            return R @ X @ R.T
        raw = total(keep.astype(float))
        half_e = 2.0 * total((keep & even).astype(float))
        half_o = 2.0 * total((keep & ~even).astype(float))
        sig = raw / (tau * s1)
        err = np.abs(half_e - half_o) / (2.0 * tau * s1)
        out.append(ConductivityTensor(float(tau), sig, raw, err, R, s1, unresolved, census))
    return out


def chambers_sigma(d: Dispersion, level: float, b, omega_tau: float, **kw) -> ConductivityTensor:
    return chambers_ladder(d, level, b, [omega_tau], **kw)[0]


@dataclass
class VolumeEstimate:
    v_minus: float
    v_plus: float
    se_minus: float            # standard errors; the two volumes use independent streams
    se_plus: float
    cell: float


def _stratified_fraction(d, level, n, rng, sign):
    A = d.reciprocal.matrix
    g = np.stack(np.meshgrid(*[np.arange(n)] * 3, indexing="ij"), -1).reshape(-1, 3)
    H = len(g)
    x = (g[:, None, :] + rng.random((H, 2, 3))) / n
    e = evaluate(d, x @ A)[0]
    ind = (sign * (e - level) < 0).astype(float)
    s2 = (ind[:, 0] - ind[:, 1]) ** 2 / 2.0
    return float(ind.mean()), float(np.sqrt(np.sum(s2 / 2.0) / H ** 2))


def fermi_volumes(d: Dispersion, level: float, n_strata: int = 24, seed: int = 0) -> VolumeEstimate:
    """Volumes of {eps < level} and {eps > level} in one cell by stratified Monte Carlo.

    n_strata^3 sub-cubes of fractional coordinates, two uniform points each;
    the per-stratum variance is estimated from the pair. The two volumes are
    drawn from independent child streams of `seed`, so V_- + V_+ = cell is a
    genuine statistical check rather than an identity.
    """
    vol = d.reciprocal.cell_volume
    r1, r2 = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    fm, sm = _stratified_fraction(d, level, n_strata, r1, 1.0)
    fp, sp = _stratified_fraction(d, level, n_strata, r2, -1.0)
    return VolumeEstimate(vol * fm, vol * fp, vol * sm, vol * sp, vol)


def hall_volume_sigma(d: Dispersion, level: float, b_mag: float, carrier: str,
                      volumes: VolumeEstimate = None) -> tuple:
    """Strong-field Hall conductivity +-2 V_-+ / ((2 pi)^3 B) and its standard error."""
    v = volumes or fermi_volumes(d, level)
    fac = 2.0 / ((2 * np.pi) ** 3 * b_mag)
    if carrier == "Electron":
        return fac * v.v_minus, fac * v.se_minus
    if carrier == "Hole":
        return -fac * v.v_plus, fac * v.se_plus
    raise ValueError("carrier must be Electron or Hole")


@dataclass
class ScalingFit:
    slope: np.ndarray          # (3, 3) least-squares slopes of log|sigma|
    envelope: np.ndarray       # (3, 3) upper-envelope slopes
    conf: np.ndarray           # (3, 3) standard error of the LS slope
    omega_tau: np.ndarray

    def to_dict(self) -> dict:
        return {"omega_tau": self.omega_tau.tolist(), "slope": self.slope.tolist(),
                "envelope": self.envelope.tolist(), "conf": self.conf.tolist()}


def scaling_exponents(omega_tau, sigmas) -> ScalingFit:
    """Per-component slopes of log|sigma| against log(omega_B tau)."""
    w = np.asarray(omega_tau, dtype=float)
    S = np.asarray(sigmas, dtype=float)
    if len(w) < 4:
        raise ValueError("need at least 4 ladder points")
    if np.any(np.diff(w) <= 0):
        raise ValueError("ladder must increase")
    if S.ndim == 1:
        S = S[:, None, None]
    x = np.log(w)
    shape = S.shape[1:]
    slope = np.full(shape, np.nan)
    env = np.full(shape, np.nan)
    conf = np.full(shape, np.nan)
    for idx in np.ndindex(shape):
        y = np.abs(S[(slice(None),) + idx])
        if np.any(y <= 0):
            continue
        y = np.log(y)
        (s, c0), cov = np.polyfit(x, y, 1, cov="unscaled")
        resid = y - (s * x + c0)
        slope[idx] = s
        conf[idx] = float(np.sqrt(cov[0, 0] * np.sum(resid ** 2) / (len(x) - 2)))
        env[idx] = envelope_slope(x, y)
    return ScalingFit(slope, env, conf, w)


def ladder_csv(tensors) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    names = [f"s{i}{j}" for i in "xyz" for j in "xyz"]
    wr.writerow(["omega_tau"] + names + ["e_" + n for n in names])
    for t in tensors:
        wr.writerow([repr(t.omega_tau)] + [repr(float(x)) for x in t.sigma.ravel()]
                    + [repr(float(x)) for x in t.err.ravel()])
    return buf.getvalue()


def fit_json(fit: ScalingFit, extra: dict = None) -> str:
    out = fit.to_dict()
    if extra:
        out.update(extra)
    return json.dumps(out, sort_keys=True, indent=1)


@dataclass
class StrongFieldHall:
    v_eff: float               # omega_B tau -> inf limit of raw^{xy}: +V_- for electrons, -V_+ for holes
    closed_fraction: float     # measure fraction on closed orbits
    closed_only: bool

    def sigma12(self, b_mag: float = 1.0) -> float:
        return 2.0 * self.v_eff / ((2 * np.pi) ** 3 * b_mag)

    def carrier(self, cell: float, tol: float = 0.02) -> str:
        if not self.closed_only or abs(self.v_eff) < tol * cell:
            return "Undefined"
        return "Electron" if self.v_eff > 0 else "Hole"


def _hall_work(args):
    d, level, b, p, limits = args
    tr = trace(d, level, b, p, limits)
    if tr.termination != Termination.ClosedReturn:
        return None
    uv = tr.uv
    area = 0.5 * float(np.sum(uv[:-1, 0] * uv[1:, 1] - uv[1:, 0] * uv[:-1, 1]))
    return -area / tr.period


def strong_field_hall(d: Dispersion, level: float, b, n_lines: int = 6, limits: TraceLimits = None,
                      workers: int = None) -> StrongFieldHall:
    """Strong-field Hall weight from closed orbits: the orbit average of
    v^x (b x (p - <p>))^y is minus the signed area over the period."""
    b = np.asarray(b, dtype=float)
    b = b / np.linalg.norm(b)
    limits = limits or TraceLimits(max_len=50.0 * d.reciprocal.cell_diameter)
    fs = fermi_samples(d, level, n_lines)
    if len(fs.w) == 0:
        return StrongFieldHall(0.0, 1.0, True)
    res = pmap(_hall_work, [(d, level, b, p, limits) for p in fs.p], workers)
    ok = np.array([r is not None for r in res])
    vals = np.array([r if r is not None else 0.0 for r in res])
    frac = float(fs.w[ok].sum() / fs.w.sum())
    return StrongFieldHall(float(np.sum(fs.w * vals)), frac, bool(ok.all()))
