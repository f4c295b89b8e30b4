"""Command-line front end: one scenario file drives one subcommand.

    novikov <subcommand> --scenario FILE [--out DIR] [--workers N] [--svg]

Exit status: 0 success, 1 scenario validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import diagram as dg
from . import quantum as qm
from . import quasi2d as q2
from . import scenario as sc
from . import svg
from . import transport as tp
from . import zkf
from .classify import ClassifyConfig, NoIntegralPlaneError, classify, recover_quantum_numbers
from .flow import detect_closure, seed_section, trace
from .parallel import default_workers

SUBCOMMANDS = ("trace", "classify", "scan", "zones", "interval", "transport", "zkf", "quantize", "quasi2d")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not serialisable: {type(x)}")


class Run:
    """Collects output files and stage timings; the single writer of the output directory."""

    def __init__(self, out_dir: str, subcommand: str, scenario_hash: str, want_svg: bool):
        self.out = out_dir
        self.sub = subcommand
        self.hash = scenario_hash
        self.svg = want_svg
        self.files = {}
        self.stages = {}
        os.makedirs(out_dir, exist_ok=True)

    def write(self, name: str, text: str):
        path = os.path.join(self.out, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        data = text.encode()
        with open(path, "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def stage(self, name):
        run = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.stages[name] = round(time.perf_counter() - self.t, 6)

        return _T()

    def manifest(self):
        m = {"tool": "novikov", "version": __version__, "subcommand": self.sub,
             "scenario_sha256": self.hash, "wall_clock_s": self.stages,
             "outputs": dict(sorted(self.files.items()))}
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            fh.write(_dumps(m))


# -- subcommands ----------------------------------------------------------

def _seeds(d, data, b, level):
    cfg = data.get("trace", {})
    n = cfg.get("n_seeds", 4)
    if "origin" in cfg:
        origins = [np.asarray(cfg["origin"], float)]
    else:
        origins = dg._plane_origins(d, level, 1, data.get("seed", 0))
    out = []
    for p0 in origins:
        out += seed_section(d, level, b, p0, n)
    return out


def cmd_trace(run: Run, data: dict, workers: int, classify_too: bool = False):
    d = sc.build_dispersion(data["dispersion"])
    eps = data["eps_f"]
    cell = d.reciprocal.cell_diameter
    lim = sc.trace_limits(data, cell)
    tol = data.get("tolerances", {})
    ccfg = ClassifyConfig(min_len_cells=tol.get("min_len_cells", 50.0), w_max_cells=tol.get("w_max_cells", 3.0))
    meta, records, qn_input = [], [], []
    for k, b in enumerate(sc.field_directions(data)):
        with run.stage(f"trace_{k}"):
            trajs = [trace(d, eps, b, s, lim) for s in _seeds(d, data, b, eps)]
        strips = []
        for j, tr in enumerate(trajs):
            run.write(f"trajectories/traj_{k}_{j}.csv", tr.to_csv())
            m = tr.metadata()
            m.update({"direction_index": k, "seed_index": j})
            meta.append(m)
            strips.append(None)
            if classify_too:
                tc = classify(tr, detect_closure(tr), config=ccfg)
                rec = {"direction_index": k, "seed_index": j, "b": b, **tc.to_record(),
                       "diagnostics": tc.diagnostics}
                records.append(rec)
                if tc.mean_dir3 is not None and tc.kind.value in ("RegularOpen", "PeriodicOpen"):
                    qn_input.append((b, tc.mean_dir3))
                    strips[-1] = (tc.mean_dir, tc.strip_width) if tc.kind.value == "RegularOpen" else None
        if run.svg:
            run.write(f"trajectories_{k}.svg", svg.trajectories_svg([t.uv for t in trajs], strips))
    run.write("trajectories.json", _dumps(meta))
    if classify_too:
        out = {"records": records, "quantum_numbers": None}
        if len({tuple(np.round(b, 12)) for b, _ in qn_input}) >= 2:
            try:
                qn, plane = recover_quantum_numbers(qn_input, d.lattice, data.get("limits", {}).get("m_max", 8),
                                                    tol.get("theta_tol", 5e-3))
                out["quantum_numbers"] = {"M": list(qn.M), "residual": qn.residual,
                                          "normal": list(plane.normal)}
            except NoIntegralPlaneError as e:
                out["quantum_numbers"] = {"error": str(e)}
        run.write("classification.json", _dumps(out))


def _scan_config(data: dict) -> dg.ScanConfig:
    s = data.get("scan", {})
    tol = data.get("tolerances", {})
    lim = data.get("limits", {})
    return dg.ScanConfig(eps_f=data["eps_f"], grid_level=data.get("field", {}).get("grid_level", 1),
                         n_seeds=s.get("n_seeds", 6), n_planes=s.get("n_planes", 2),
                         max_len_cells=lim.get("max_len_cells", 60.0), seed=data.get("seed", 0),
                         m_max=lim.get("m_max", 8), theta_tol=tol.get("theta_tol", 5e-3),
                         hall=s.get("hall", True), tau_cut=s.get("tau_cut", 50.0),
                         intervals=s.get("intervals", False), eps_resolution=tol.get("eps_resolution", 0.02))


def cmd_scan(run: Run, data: dict, workers: int, zones_too: bool = False):
    d = sc.build_dispersion(data["dispersion"])
    cfg = _scan_config(data)
    f = data.get("field", {})
    grid = dg.direction_grid(sc.field_directions(data)) if ("b" in f or "directions" in f) else None
    with run.stage("scan"):
        D = dg.scan(d, cfg, grid, workers)
    run.write("diagram.jsonl", D.to_jsonl())
    run.write("diagram.csv", D.to_csv())
    zs = dg.extract_zones(D)
    if zones_too:
        run.write("zones.json", dg.zones_json(zs))
    if run.svg:
        run.write("diagram.svg", svg.diagram_svg(D.grid.directions, D.records, zs.zones))


def cmd_interval(run: Run, data: dict, workers: int):
    d = sc.build_dispersion(data["dispersion"])
    tol = data.get("tolerances", {})
    cfg = dg.ScanConfig(eps_resolution=tol.get("eps_resolution", 0.02), seed=data.get("seed", 0))
    out = []
    with run.stage("interval"):
        for b in sc.field_directions(data):
            out.append({"b": b, **dg.open_energy_interval(d, b, cfg).to_dict()})
    run.write("intervals.json", _dumps(out))


def cmd_transport(run: Run, data: dict, workers: int):
    d = sc.build_dispersion(data["dispersion"])
    t = data.get("transport", {})
    eps = data["eps_f"]
    b = sc.field_directions(data)[0]
    taus = sorted(data["omega_tau"])
    with run.stage("chambers"):
        T = tp.chambers_ladder(d, eps, b, taus, n_lines=t.get("n_lines", 12), window_tau=t.get("window_tau", 10.0),
                               carrier=t.get("carrier"), workers=workers,
                               limits=sc.trace_limits(data, d.reciprocal.cell_diameter, 200.0))
    run.write("ladder.csv", tp.ladder_csv(T))
    extra = {"axes": T[0].axes.tolist(), "census": T[0].census, "unresolved": T[0].unresolved}
    if len(taus) >= 4:
        fit = tp.scaling_exponents(taus, [x.sigma for x in T])
        run.write("fit.json", tp.fit_json(fit, extra) + "\n")
    else:
        run.write("fit.json", _dumps(extra))
    if d.periodic:
        with run.stage("volumes"):
            v = tp.fermi_volumes(d, eps, t.get("hall_strata", 24), data.get("seed", 0))
        bm = data.get("field", {}).get("b_mag", 1.0)
        hall = {"v_minus": v.v_minus, "v_plus": v.v_plus, "se_minus": v.se_minus, "se_plus": v.se_plus,
                "cell": v.cell, "b_mag": bm,
                "sigma12_electron": tp.hall_volume_sigma(d, eps, bm, "Electron", v)[0],
                "sigma12_hole": tp.hall_volume_sigma(d, eps, bm, "Hole", v)[0],
                "sigma12_chambers": T[-1].hall_physical(bm), "omega_tau": T[-1].omega_tau}
        run.write("hall.json", _dumps(hall))


def cmd_zkf(run: Run, data: dict, workers: int):
    z = data.get("zkf", {})
    if "series" in z:
        s = z["series"]
        if not len(s["l"]) == len(s["dx"]) == len(s["dy"]):
            raise sc.ScenarioError("$.zkf.series", "l, dx and dy must have equal length")
        ser = zkf.series_from_arrays(s["l"], s["dx"], s["dy"], rotate=z.get("rotate", False))
    else:
        d = sc.build_dispersion(data["dispersion"])
        b = sc.field_directions(data)[0]
        cell = d.reciprocal.cell_diameter
        lim = sc.trace_limits(data, cell)
        lim.max_len = z.get("length_cells", 2000.0) * cell
        lim.max_steps = max(lim.max_steps, 100_000_000)
        seeds = _seeds(d, data, b, data["eps_f"])
        if not seeds:
            raise RuntimeError("no seed on the level in the chosen plane")
        with run.stage("trace"):
            tr = trace(d, data["eps_f"], b, seeds[0], lim)
        ser = zkf.deviation_series(tr)
    est = zkf.estimate_indices(ser)
    run.write("deviation.csv", ser.to_csv())
    run.write("zkf.json", zkf.fit_report(ser, est) + "\n")


def cmd_quantize(run: Run, data: dict, workers: int):
    d = sc.build_dispersion(data["dispersion"])
    q = data["quantize"]
    b = sc.field_directions(data)[0]
    bm = data.get("field", {}).get("b_mag", 0.05)
    eps = np.asarray(q["eps"], float)
    pz = np.asarray(q.get("pz", [0.0]), float)
    with run.stage("areas"):
        tab = qm.tabulate_areas(d, b, eps, pz, q.get("center", [0.0, 0.0, 0.0]))
    run.write("areas.csv", tab.to_csv())
    n_range = q.get("n_range", [0, 10])
    levels, rows = [], ["pz,eps,period,spacing"]
    for j, z in enumerate(pz):
        ok = np.isfinite(tab.area[:, j])
        for e, T in zip(eps[ok], tab.period[ok, j]):
            rows.append(f"{float(z)!r},{float(e)!r},{float(T)!r},{float(qm.level_spacing(T, bm))!r}")
        try:
            levels.append(qm.quantize(eps, tab.area[:, j], bm, n_range, z).to_csv())
        except qm.QuantumRangeError as e:
            levels.append(f"# pz={float(z)!r}: {e}\n")
    run.write("levels.csv", "".join(levels))
    run.write("spacing.csv", "\n".join(rows) + "\n")
    if len(pz) >= 5:
        ext = {repr(float(e)): qm.find_extremal_orbits(pz, tab.area[i]) for i, e in enumerate(eps)}
        run.write("extremal.json", _dumps(ext))
    if "breakdown" in q:
        bd = q["breakdown"]
        with run.stage("breakdown"):
            gaps = qm.breakdown_gaps(d, bd["level"], b, bd.get("p0", [0.0, 0.0, 0.0]), bd.get("window", 0.25))
        run.write("breakdown.json", qm.gaps_json(gaps) + "\n")


def cmd_quasi2d(run: Run, data: dict, workers: int):
    q = data["quasi2d"]
    if "potential" in q:
        V = q2.QuasiPotential.from_dict(q["potential"])
    else:
        s = q["superposition"]
        V = q2.build_superposition(q2.directions_at(s["angles_deg"]), s["periods"], s.get("amplitudes"),
                                   s.get("phases"))
    level = q["level"]
    run.write("potential.json", q2.potential_json(V) + "\n")
    rng = np.random.default_rng(data.get("seed", 0))
    scale = 2 * np.pi / np.linalg.norm(V.k, axis=1).min()
    starts = q.get("starts") or (rng.random((4, 2)) * scale).tolist()
    lim = sc.trace_limits(data, scale, q.get("length_cells", 200.0))
    out = []
    for ir, rb in enumerate(q.get("r_b", [0.0])):
        W = q2.cyclotron_average(V, rb)
        lines = []
        with run.stage(f"r_b={float(rb)!r}"):
            for j, s in enumerate(starts):
                try:
                    r0 = q2.project_to_level(W, level, s)
                except RuntimeError as e:
                    out.append({"r_b": rb, "start": s, "error": str(e)})
                    continue
                tr = q2.trace_level_line(W, level, r0, lim)
                c = q2.classify_level_line(tr, W)
                out.append({"r_b": rb, "start": s, **c.to_dict()})
                run.write(f"lines/line_{len(out) - 1}.csv", q2.level_line_csv(tr))
                lines.append(tr.uv)
        if run.svg:
            run.write(f"quasi2d_{ir}.svg", svg.heatmap_svg(W, 2 * scale, lines))
    run.write("quasi2d.json", _dumps(out))


DISPATCH = {
    "trace": lambda r, d, w: cmd_trace(r, d, w, False),
    "classify": lambda r, d, w: cmd_trace(r, d, w, True),
    "scan": lambda r, d, w: cmd_scan(r, d, w, False),
    "zones": lambda r, d, w: cmd_scan(r, d, w, True),
    "interval": cmd_interval,
    "transport": cmd_transport,
    "zkf": cmd_zkf,
    "quantize": cmd_quantize,
    "quasi2d": cmd_quasi2d,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="novikov", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--scenario", required=True)
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--svg", action="store_true")
    args = ap.parse_args(argv)
    workers = args.workers if args.workers is not None else default_workers()
    try:
        data, digest = sc.load(args.scenario, args.subcommand)
        sc.build_dispersion(data["dispersion"]) if "dispersion" in data else None
    except sc.ScenarioError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"validation error: $: cannot read scenario ({e})", file=sys.stderr)
        return 1
    out = args.out or data.get("output") or "novikov_out"
    run = Run(out, args.subcommand, digest, args.svg)
    try:
        DISPATCH[args.subcommand](run, data, workers)
    except sc.ScenarioError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # everything past validation counts as a numerical failure
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        run.manifest()
        return 2
    run.manifest()
    return 0


if __name__ == "__main__":
    sys.exit(main())
