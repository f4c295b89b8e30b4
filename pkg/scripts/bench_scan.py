"""Wall-clock of an angular-diagram scan at several worker counts.

    python3 scripts/bench_scan.py [--level 3] [--workers 1 2 4 8] [--out bench.json]

Also checks that every worker count produces the same records.
"""
import argparse
import json
import os
import time

from novikov import diagram as dg
from novikov.lattice import preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--level", type=int, default=3)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--preset", default="corrugated_cylinder")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    d = preset(args.preset)
    cfg = dg.ScanConfig(grid_level=args.level, hall=False, seed=7)
    rows, ref = [], None
    for w in args.workers:
        t0 = time.perf_counter()
        D = dg.scan(d, cfg, workers=w)
        dt = time.perf_counter() - t0
        text = D.to_jsonl()
        ref = ref or text
        rows.append({"workers": w, "seconds": round(dt, 3), "identical": text == ref})
        print(f"workers={w:>2}  {dt:8.2f}s  identical={text == ref}", flush=True)
    base = rows[0]["seconds"]
    for r in rows:
        r["speedup"] = round(base / r["seconds"], 3)
    report = {"cpu_count": os.cpu_count(), "level": args.level, "preset": args.preset, "runs": rows}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=1)
    print(json.dumps(report, indent=1))


if __name__ == "__main__":
    main()
