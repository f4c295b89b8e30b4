"""Transport ladder against ZKF predictions on the tribonacci field direction.

Traces 12 long trajectories at eps = 0 (tight_binding), estimates the
deviation exponents, then computes the conductivity ladder in the frame
whose x axis is the common fast-deviation axis. Prints fitted and local
(pairwise) slopes so the approach to the asymptotic regime can be judged.

    python3 scripts/chaotic_ladder.py [--length-cells 8000] [--out report.json]
"""
import argparse
import json

import numpy as np

from novikov import diagram as dg
from novikov import transport as T
from novikov import zkf
from novikov.flow import TraceLimits, seed_section, trace
from novikov.lattice import preset

LADDER = [8.0, 16.0, 32.0, 64.0, 128.0, 256.0]


def tribonacci_field():
    r = np.roots([1, -1, -1, -1])
    t = float(r[np.isreal(r)].real.max())
    b = np.array([1.0, t, t * t])
    return b / np.linalg.norm(b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--length-cells", type=float, default=8000.0)
    ap.add_argument("--n-lines", type=int, default=8)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    d = preset("tight_binding")
    b = tribonacci_field()
    cell = d.reciprocal.cell_diameter
    ests, fast = [], []
    for o in dg._plane_origins(d, 0.0, 6, 3):
        for s in seed_section(d, 0.0, b, o, 2):
            tr = trace(d, 0.0, b, s, TraceLimits(max_len=args.length_cells * cell, max_steps=100_000_000))
            e = zkf.estimate_indices(zkf.deviation_series(tr))
            ests.append(e.to_dict())
            a = e.axes[0]
            fast.append(a[0] * tr.frame.e1 + a[1] * tr.frame.e2)
    nu2 = float(np.median([e["nu2"] for e in ests]))
    nu3 = float(np.median([e["nu3"] for e in ests]))
    x = np.linalg.eigh(sum(np.outer(f, f) for f in fast))[1][:, -1]
    R = T.default_axes(b, x)
    L = T.chambers_ladder(d, 0.0, b, LADDER, n_lines=args.n_lines, axes=R)
    S = np.array([t.sigma for t in L])
    fit = T.scaling_exponents(LADDER, S)
    lw = np.log(LADDER)
    local = {c: (np.diff(np.log(np.abs(S[:, i, i]))) / np.diff(lw)).round(3).tolist()
             for c, i in (("xx", 0), ("yy", 1), ("zz", 2))}
    report = {"b": b.tolist(), "fast_axis": x.tolist(), "nu2": nu2, "nu3": nu3,
              "predicted": {"xx": 2 * nu3 - 2, "yy": 2 * nu2 - 2},
              "envelope": {"xx": float(fit.envelope[0, 0]), "yy": float(fit.envelope[1, 1])},
              "slope": {"xx": float(fit.slope[0, 0]), "yy": float(fit.slope[1, 1]), "zz": float(fit.slope[2, 2])},
              "local_slopes": local, "sigma_diag": S[:, [0, 1, 2], [0, 1, 2]].tolist(),
              "census": L[0].census, "zkf": ests}
    text = json.dumps(report, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(f"nu2={nu2:.3f} nu3={nu3:.3f}  predicted xx={2 * nu3 - 2:.3f} yy={2 * nu2 - 2:.3f}")
    print(f"envelope  xx={fit.envelope[0, 0]:.3f} yy={fit.envelope[1, 1]:.3f}")
    for c, v in local.items():
        print(f"local {c}: {v}")


if __name__ == "__main__":
    main()
