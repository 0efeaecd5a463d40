"""Grid refinement of the ground-state energy for one configuration.

    python3 scripts/refinement_study.py --alpha 0.8 --ns 64 128 256 512
"""

import argparse
import csv
import sys
import time

from fracnehari import ProblemConfig, ground_state


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--a", type=float, default=1.0)
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--ns", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--restarts", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n", "energy_m", "rel_change", "grad_residual", "iterations", "seconds"])
    prev = None
    for n in args.ns:
        cfg = ProblemConfig(alpha=args.alpha, p=args.p, a=args.a, b=args.b, n=n,
                            restarts=args.restarts, seed=args.seed)
        start = time.perf_counter()
        rep = ground_state(cfg)
        change = "" if prev is None else f"{abs(rep.energy_m - prev) / prev:.3e}"
        w.writerow([n, repr(rep.energy_m), change, f"{rep.grad_residual:.2e}", rep.iterations,
                    f"{time.perf_counter() - start:.1f}"])
        prev = rep.energy_m


if __name__ == "__main__":
    main()
