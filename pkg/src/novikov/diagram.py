"""Angular diagrams: scans over field directions on the sphere.

Per direction: classes of seeded trajectories at eps_F, quantum numbers
from the mean directions of the direction and its grid neighbours, the
strong-field Hall weight of closed-only directions, and optionally the
open-energy interval. Records are computed once per antipodal pair and
shared: every quantity stored is invariant under b -> -b.
"""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .classify import ClassifyConfig, InconclusiveError, Kind, NoIntegralPlaneError, classify, recover_quantum_numbers
from .flow import Termination, TraceLimits, detect_closure, seed_section, trace
from .lattice import Dispersion, evaluate
from .parallel import pmap
from .transport import strong_field_hall


# -- direction grid ---------------------------------------------------------

@dataclass
class DirectionGrid:
    directions: np.ndarray     # (n, 3) unit vectors
    antipode: np.ndarray       # (n,) index of -b
    edges: np.ndarray          # (m, 2) grid adjacency, i < j
    level: int = 0

    def neighbours(self) -> list:
        nb = [[] for _ in range(len(self.directions))]
        for i, j in self.edges:
            nb[i].append(int(j))
            nb[j].append(int(i))
        return [sorted(x) for x in nb]

    def representatives(self) -> np.ndarray:
        """One index per antipodal pair (the smaller index)."""
        idx = np.arange(len(self.directions))
        return idx[idx <= self.antipode]


def icosphere(level: int = 0) -> DirectionGrid:
    """Subdivided icosahedron: 10 * 4^level + 2 vertices, centrally symmetric."""
    g = (1 + 5 ** 0.5) / 2
    v = [(-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0), (0, -1, g), (0, 1, g),
         (0, -1, -g), (0, 1, -g), (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(x, float) / np.linalg.norm(x) for x in v]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    X = np.array(verts)
    anti = np.array([int(np.argmin(np.linalg.norm(X + x, axis=1))) for x in X])
    if not np.allclose(X[anti], -X, atol=1e-12):
        raise AssertionError("icosphere lost central symmetry")
    E = set()
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            E.add((min(a, b), max(a, b)))
    return DirectionGrid(X, anti, np.array(sorted(E)), level)


def direction_grid(directions) -> DirectionGrid:
    """Explicit direction list closed under antipody (no adjacency)."""
    X = [np.asarray(b, float) / np.linalg.norm(b) for b in directions]
    out = []
    for x in X:
        for y in (x, -x):
            if not any(np.allclose(y, z, atol=1e-12) for z in out):
                out.append(y)
    X = np.array(out)
    anti = np.array([int(np.argmin(np.linalg.norm(X + x, axis=1))) for x in X])
    return DirectionGrid(X, anti, np.zeros((0, 2), dtype=int), -1)


# -- per-direction work -----------------------------------------------------

@dataclass
class ScanConfig:
    eps_f: float = 0.0
    grid_level: int = 1
    n_seeds: int = 6
    n_planes: int = 2
    max_len_cells: float = 60.0
    seed: int = 0
    m_max: int = 8
    theta_tol: float = 5e-3
    hall: bool = True
    hall_lines: int = 12
    tau_cut: float = 50.0          # omega_B tau for the observable-zone map
    intervals: bool = False
    interval_planes: int = 8       # planes stacked along b for the interval predicate
    eps_resolution: float = 0.02
    interval_len_cells: float = 30.0
    d_min_cells: float = 10.0
    extend_factor: float = 4.0     # chaotic-looking traces are retraced this much longer ...
    max_extensions: int = 2        # ... at most this many times
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)


def _plane_origins(d: Dispersion, level: float, n_planes: int, seed: int) -> list:
    """Plane base points on the level surface, from a seed tied to the antipodal pair.

    Random cell points are pushed onto {eps = level} by gradient Newton
    steps, so every plane is guaranteed to meet the surface.
    """
    rng = np.random.default_rng(seed)
    A = d.reciprocal.matrix
    out = []
    for _ in range(64 * n_planes):
        if len(out) == n_planes:
            break
        p = rng.random(3) @ A
        for _ in range(60):
            e, g = evaluate(d, p)
            gg = g @ g
            if gg < 1e-20:
                break
            p = p - (e - level) * g / gg
            if abs(e - level) < 1e-12:
                out.append(p)
                break
    return out


def _class_rank(kind: Kind) -> int:
    return {Kind.ChaoticWandering: 5, Kind.ChaoticDirected: 4, Kind.RegularOpen: 3,
            Kind.PeriodicOpen: 2, Kind.Closed: 1, Kind.Singular: 0}[kind]


_SIGN_REF = np.array([1.0, 2.0 ** 0.5, np.pi])


def _canon_dir(v) -> list:
    """Unit line direction with a sign fixed against a generic reference vector."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    return (v if v @ _SIGN_REF >= 0 else -v).tolist()


def _mean_line(dirs) -> list:
    """Principal axis of a set of line directions (signs ignored)."""
    D = np.asarray(dirs, dtype=float)
    w, V = np.linalg.eigh(D.T @ D)
    return _canon_dir(V[:, -1])


def _trace_seeds(d, level, b, origins, n_seeds, max_len):
    lim = TraceLimits(max_len=max_len, max_steps=10_000_000)
    for p0 in origins:
        for s in seed_section(d, level, b, p0, n_seeds):
            yield trace(d, level, b, s, lim)


def open_predicate(d: Dispersion, level: float, b, cfg: ScanConfig, origins) -> bool:
    """Some seeded trajectory stays open: periodic, or no closure within the
    length budget with net displacement above d_min cell diameters."""
    if d.periodic and not (d.eps_min < level < d.eps_max):
        return False
    cell = d.reciprocal.cell_diameter
    for tr in _trace_seeds(d, level, b, origins, cfg.n_seeds, cfg.interval_len_cells * cell):
        if tr.termination == Termination.PeriodClose:
            return True
        if tr.termination == Termination.LengthLimit:
            if np.linalg.norm(tr.uv[-1] - tr.uv[0]) > cfg.d_min_cells * cell:
                return True
    return False


def plane_stack(d: Dispersion, b, n: int) -> list:
    """Base points of n planes evenly spaced along b across one cell.

    For rational b the planes are not all equivalent (open trajectories may
    live on a sub-family), so the interval predicate samples the offset.
    """
    b = np.asarray(b, float) / np.linalg.norm(b)
    span = float(np.sum(np.abs(d.reciprocal.matrix @ b)))
    return [((k + 0.5) / n * span) * b for k in range(n)]


@dataclass
class OpenEnergyInterval:
    kind: str                  # Interval / Isolated / None
    eps1: float = None
    eps2: float = None
    resolution: float = None
    contiguous: bool = True    # False when the coarse scan saw several open ranges

    def to_dict(self) -> dict:
        return asdict(self)


def open_energy_interval(d: Dispersion, b, cfg: ScanConfig = None, origins=None) -> OpenEnergyInterval:
    """Coarse scan of the open predicate over (eps_min, eps_max), edges refined by bisection."""
    cfg = cfg or ScanConfig()
    b = np.asarray(b, float) / np.linalg.norm(b)
    if origins is None:
        origins = plane_stack(d, b, cfg.interval_planes)
    lo, hi = d.eps_min, d.eps_max
    res = cfg.eps_resolution * (hi - lo) / 2.0
    n = 2 * max(4, int(np.ceil((hi - lo) / (8 * res))))
    # interior nodes of an even grid: the band centre is always probed
    es = lo + (hi - lo) * np.arange(1, n) / n
    flags = np.array([open_predicate(d, e, b, cfg, origins) for e in es])
    if not flags.any():
        return OpenEnergyInterval("None", resolution=res)
    idx = np.flatnonzero(flags)
    contiguous = bool(np.all(np.diff(idx) == 1))

    def edge(e_out, e_in):
        while abs(e_in - e_out) > res:
            m = 0.5 * (e_in + e_out)
            if open_predicate(d, m, b, cfg, origins):
                e_in = m
            else:
                e_out = m
        return 0.5 * (e_in + e_out)

    e1 = edge(es[idx[0] - 1] if idx[0] > 0 else lo, es[idx[0]])
    e2 = edge(es[idx[-1] + 1] if idx[-1] < len(es) - 1 else hi, es[idx[-1]])
    if e2 - e1 <= res:
        return OpenEnergyInterval("Isolated", 0.5 * (e1 + e2), 0.5 * (e1 + e2), res, contiguous)
    return OpenEnergyInterval("Interval", float(e1), float(e2), res, contiguous)


def _scan_direction(args) -> dict:
    d, b, cfg, pair_seed = args
    cell = d.reciprocal.cell_diameter
    origins = _plane_origins(d, cfg.eps_f, cfg.n_planes, pair_seed)
    kinds, dirs, failures = [], [], []
    periods, observable = [], False
    for tr in _trace_seeds(d, cfg.eps_f, b, origins, cfg.n_seeds, cfg.max_len_cells * cell):
        try:
            tc = classify(tr, detect_closure(tr), config=cfg.classify)
            # near-rational regular strips fill their width slowly: give them more length
            ext = 0
            while tc.kind in (Kind.ChaoticDirected, Kind.ChaoticWandering) and ext < cfg.max_extensions:
                ext += 1
                lim = TraceLimits(max_len=cfg.max_len_cells * cell * cfg.extend_factor ** ext, max_steps=50_000_000)
                tr = trace(d, cfg.eps_f, b, tr.points[0], lim)
                tc = classify(tr, detect_closure(tr), config=cfg.classify)
        except InconclusiveError as e:
            failures.append(str(e))
            continue
        kinds.append(tc.kind)
        if tc.kind in (Kind.RegularOpen, Kind.PeriodicOpen) and tc.mean_dir3 is not None:
            dirs.append(_canon_dir(tc.mean_dir3))
        if tc.kind == Kind.Closed:
            periods.append(tr.period)
            if tr.period > cfg.tau_cut:
                observable = True
        elif tc.kind != Kind.Singular:
            observable = True
    rec = {"n_traces": len(kinds), "failures": failures}
    if not kinds:
        rec["class"] = "Empty" if not failures else "Inconclusive"
    else:
        rec["class"] = max(kinds, key=_class_rank).value
        rec["counts"] = {k.value: int(v) for k, v in sorted(Counter(kinds).items(), key=lambda kv: kv[0].value)}
    rec["mean_dir"] = _mean_line(dirs) if dirs else None
    rec["observable_open"] = bool(observable)
    rec["max_period"] = float(max(periods)) if periods else None
    if cfg.hall and rec["class"] == "Closed":
        h = strong_field_hall(d, cfg.eps_f, b, cfg.hall_lines, workers=1)
        rec["hall"] = {"v_eff": h.v_eff, "closed_only": h.closed_only, "sigma12": h.sigma12(),
                       "carrier": h.carrier(d.reciprocal.cell_volume)}
    else:
        rec["hall"] = None
    if cfg.intervals:
        rec["interval"] = open_energy_interval(d, b, cfg).to_dict()
    return rec


@dataclass
class AngularDiagram:
    grid: DirectionGrid
    records: list              # one dict per grid direction
    config: ScanConfig

    def to_jsonl(self) -> str:
        lines = []
        for i, (b, r) in enumerate(zip(self.grid.directions, self.records)):
            lines.append(json.dumps({"index": i, "b": b.tolist(), **r}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["index", "bx", "by", "bz", "class", "M1", "M2", "M3", "zone", "observable_zone",
                     "carrier", "v_eff"])
        for i, (b, r) in enumerate(zip(self.grid.directions, self.records)):
            M = r.get("M") or [None] * 3
            h = r.get("hall") or {}
            wr.writerow([i, *[repr(float(x)) for x in b], r["class"], *M, r.get("zone"),
                         r.get("observable_zone"), h.get("carrier"), h.get("v_eff")])
        return buf.getvalue()


def _assign_quantum_numbers(grid: DirectionGrid, records: list, cfg: ScanConfig):
    """Integer triple per open-regular direction from its own and its neighbours' mean directions."""
    nb = grid.neighbours()
    regular = [r["class"] in ("RegularOpen", "PeriodicOpen") and r["mean_dir"] is not None for r in records]
    for i in grid.representatives():
        if not regular[i]:
            continue
        own = (grid.directions[i], records[i]["mean_dir"])
        others = [(grid.directions[j], records[j]["mean_dir"]) for j in nb[i] if regular[j]]
        M = None
        try:
            M = recover_quantum_numbers([own] + others, m_max=cfg.m_max, theta_tol=cfg.theta_tol)[0]
        except (NoIntegralPlaneError, ValueError):
            # neighbours may straddle a zone boundary: vote over single pairs
            votes = Counter()
            for o in others:
                try:
                    votes[recover_quantum_numbers([own, o], m_max=cfg.m_max, theta_tol=cfg.theta_tol)[0].M] += 1
                except (NoIntegralPlaneError, ValueError):
                    pass
            if votes:
                best = max(votes.values())
                Mt = min(m for m, v in votes.items() if v == best)
                records[i]["M"] = list(Mt)
                records[grid.antipode[i]]["M"] = list(Mt)
            continue
        records[i]["M"] = list(M.M)
        records[i]["M_residual"] = M.residual
        records[grid.antipode[i]]["M"] = list(M.M)
        records[grid.antipode[i]]["M_residual"] = M.residual


def scan(d: Dispersion, cfg: ScanConfig = None, grid: DirectionGrid = None, workers: int = None) -> AngularDiagram:
    cfg = cfg or ScanConfig()
    grid = grid or icosphere(cfg.grid_level)
    reps = grid.representatives()
    # one child seed per antipodal pair, independent of scheduling
    seeds = np.random.SeedSequence(cfg.seed).generate_state(len(grid.directions))
    items = [(d, grid.directions[i], cfg, int(seeds[i])) for i in reps]
    out = pmap(_scan_direction, items, workers)
    records = [None] * len(grid.directions)
    for i, r in zip(reps, out):
        records[i] = r
        records[grid.antipode[i]] = json.loads(json.dumps(r))
    for r in records:
        r.setdefault("M", None)
    _assign_quantum_numbers(grid, records, cfg)
    zs = extract_zones(AngularDiagram(grid, records, cfg))
    for z in zs.zones:
        for i in z["members"]:
            records[i]["zone"] = z["id"]
    for z in zs.observable:
        for i in z["members"]:
            records[i]["observable_zone"] = z["id"]
    for r in records:
        r.setdefault("zone", None)
        r.setdefault("observable_zone", None)
    return AngularDiagram(grid, records, cfg)


# -- zones ------------------------------------------------------------------

@dataclass
class ZoneSet:
    zones: list                # {"id", "M", "members", "derived"}
    observable: list           # larger map: zones grown through observably-open directions
    diagram_type: str          # A / B / Undetermined
    hall_values: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"zones": self.zones, "observable": self.observable, "diagram_type": self.diagram_type,
                "hall_values": self.hall_values}


def _components(n, edges, mask, same):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        if mask[i] and mask[j] and same(i, j):
            parent[find(i)] = find(j)
    comps = {}
    for i in range(n):
        if mask[i]:
            comps.setdefault(find(i), []).append(i)
    return sorted(comps.values(), key=lambda c: c[0])


def _antipodal_merge(comps, anti):
    """Merge each component with the one holding its antipodes."""
    where = {i: k for k, c in enumerate(comps) for i in c}
    merged, seen = [], set()
    for k, c in enumerate(comps):
        if k in seen:
            continue
        seen.add(k)
        group = set(c)
        k2 = where.get(int(anti[c[0]]))
        if k2 is not None and k2 not in seen:
            seen.add(k2)
            group |= set(comps[k2])
        merged.append(sorted(group))
    return merged


def extract_zones(diagram: AngularDiagram, hall_rtol: float = 0.1) -> ZoneSet:
    """Connected components of directions sharing M, closed under antipody.

    Diagram type from the Hall weights of closed-only directions: A with a
    single value (clustered within `hall_rtol` of the largest |v_eff|), B with two or more.
    """
    grid, recs = diagram.grid, diagram.records
    n = len(recs)
    Ms = [tuple(r["M"]) if r.get("M") else None for r in recs]
    has = [m is not None for m in Ms]
    comps = _antipodal_merge(_components(n, grid.edges, has, lambda i, j: Ms[i] == Ms[j]), grid.antipode)
    nb = grid.neighbours()
    zones = []
    for k, c in enumerate(comps):
        inside = set(c)
        derived = sorted({j for i in c for j in nb[i] if j not in inside and not has[j]
                          and recs[j]["class"] == "PeriodicOpen"})
        zones.append({"id": k, "M": list(Ms[c[0]]), "members": c, "derived": derived})
    for z in zones:
        for i, j in grid.edges:
            if (i in z["members"]) != (j in z["members"]) and has[i] and has[j] and Ms[i] != Ms[j]:
                # adjacent zones with different triples: surfaced, not merged
                z.setdefault("conflicts", []).append([int(i), int(j)])
    # observable map: grow each zone through directions that look open at finite tau
    obs_mask = [has[i] or bool(recs[i].get("observable_open")) for i in range(n)]
    label = [None] * n
    for z in zones:
        for i in z["members"]:
            label[i] = z["id"]
    frontier = [i for i in range(n) if label[i] is not None]
    while frontier:
        nxt = []
        for i in frontier:
            for j in nb[i]:
                if label[j] is None and obs_mask[j]:
                    label[j] = label[i]
                    nxt.append(j)
        frontier = sorted(nxt)
    observable = [{"id": z["id"], "M": z["M"], "members": [i for i in range(n) if label[i] == z["id"]]}
                  for z in zones]
    # Hall type
    vals = []
    for r in recs:
        h = r.get("hall")
        if h and h.get("closed_only"):
            vals.append(h["v_eff"])
    clusters = []
    if vals:
        scale = max(abs(v) for v in vals) or 1.0
        for v in sorted(vals):
            if clusters and abs(v - clusters[-1][-1]) <= hall_rtol * scale:
                clusters[-1].append(v)
            else:
                clusters.append([v])
    if not clusters:
        dtype = "Undetermined"
    else:
        dtype = "A" if len(clusters) == 1 else "B"
    hall_values = [float(np.mean(c)) for c in clusters]
    return ZoneSet(zones, observable, dtype, hall_values)


def zones_json(zs: ZoneSet) -> str:
    return json.dumps(zs.to_dict(), sort_keys=True, indent=1)
