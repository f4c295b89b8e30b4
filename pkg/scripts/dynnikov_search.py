"""Search for a chaotic (Dynnikov-type) configuration by interval collapse.

For each candidate field direction the open-energy interval of tight_binding
is estimated at two trace lengths. A direction whose interval shrinks toward
a single level as the trace grows, and whose traces at that level are
classified as wandering, is a candidate. Prints a JSON report.

    python3 scripts/dynnikov_search.py [--out report.json] [--workers N]
"""
import argparse
import json

import numpy as np

from novikov import diagram as dg
from novikov.classify import classify
from novikov.flow import TraceLimits, detect_closure, seed_section, trace
from novikov.lattice import preset
from novikov.parallel import pmap


def cubic_root(coeffs):
    r = np.roots(coeffs)
    return float(r[np.isreal(r)].real.max())


def candidates():
    t = cubic_root([1, -1, -1, -1])        # tribonacci
    p = cubic_root([1, 0, -1, -1])         # plastic number
    g = (1 + 5 ** 0.5) / 2
    rng = np.random.default_rng(11)
    out = {
        "tribonacci": (1.0, t, t * t),
        "plastic": (1.0, p, p * p),
        "cbrt2": (1.0, 2 ** (1 / 3), 4 ** (1 / 3)),
        "golden_pi": (1.0, g, np.pi),
        "sqrt2_pi": (1.0, 2 ** 0.5, np.pi),
    }
    for k in range(3):
        v = rng.normal(size=3)
        out[f"random{k}"] = tuple(np.abs(v))
    return {k: np.asarray(v) / np.linalg.norm(v) for k, v in out.items()}


def wander_fraction(d, b, level, n=8, length_cells=400):
    cell = d.reciprocal.cell_diameter
    kinds = []
    for o in dg._plane_origins(d, level, 2, 5):
        for s in seed_section(d, level, b, o, n // 2):
            tr = trace(d, level, b, s, TraceLimits(max_len=length_cells * cell, max_steps=50_000_000))
            kinds.append(classify(tr, detect_closure(tr)).kind.value)
    return kinds.count("ChaoticWandering") / max(len(kinds), 1), kinds


def probe(args):
    name, b = args
    d = preset("tight_binding")
    row = {"name": name, "b": b.tolist()}
    for L in (30, 100):
        cfg = dg.ScanConfig(eps_resolution=0.01, interval_len_cells=L)
        iv = dg.open_energy_interval(d, b, cfg)
        row[f"interval_L{L}"] = iv.to_dict()
    iv = row["interval_L100"]
    mid = 0.0 if iv["eps1"] is None else 0.5 * (iv["eps1"] + iv["eps2"])
    row["wander_fraction"], row["kinds"] = wander_fraction(d, b, mid)
    w30 = _width(row["interval_L30"])
    w100 = _width(row["interval_L100"])
    row["width_ratio"] = w100 / w30 if w30 > 0 else None
    return row


def _width(iv):
    return 0.0 if iv["eps1"] is None else iv["eps2"] - iv["eps1"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    rows = pmap(probe, list(candidates().items()), workers=args.workers)
    # collapse: the interval shrinks markedly with length and the traces wander
    for r in rows:
        r["candidate"] = bool(r["width_ratio"] is not None and r["width_ratio"] < 0.5 and r["wander_fraction"] > 0.5)
    text = json.dumps(rows, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    for r in rows:
        print(f"{r['name']:>12}  width30={_width(r['interval_L30']):.4f}  width100={_width(r['interval_L100']):.4f}"
              f"  wander={r['wander_fraction']:.2f}  candidate={r['candidate']}")


if __name__ == "__main__":
    main()
