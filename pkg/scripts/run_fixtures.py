"""Detect constraints on every bundled fixture, verify them and print a summary."""

import argparse
import time

from hiersym import constraints as C
from hiersym.bundled import NAMES, load_fixture
from hiersym.symmetry import DetectOptions, run_detection


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--approx", default="exact", choices=["off", "exact"])
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--show", action="store_true", help="print every constraint")
    args = ap.parse_args()

    bad = 0
    for name in NAMES:
        design = load_fixture(name)
        t0 = time.perf_counter()
        res = run_detection(design, options=DetectOptions(approx=args.approx, threads=args.threads))
        dt = time.perf_counter() - t0
        report = C.verify(res.constraints, design)
        bad += report.exit_code != C.EXIT_OK
        print(f"{name:12s} {len(res.constraints):3d} constraints  {dt * 1000:7.1f} ms  "
              f"verify: {report.count('consistent')} ok, {report.count('inconsistent')} bad, "
              f"{report.count('stale')} stale")
        if args.show:
            for c in C.canonicalize(res.constraints):
                print("   ", C.to_dict(c))
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
