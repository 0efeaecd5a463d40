"""Ground-state energy, mountain-pass floor and solution norms across alpha.

Writes a CSV to stdout; the solutions themselves are not kept.

    python3 scripts/alpha_sweep.py --p 2 --start 0.55 --stop 1.0 --step 0.05 --n 128
"""

import argparse
import csv
import sys

import numpy as np

from fracnehari import ProblemConfig, ground_state
from fracnehari.errors import FracNehariError


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--start", type=float, default=0.55)
    ap.add_argument("--stop", type=float, default=1.0)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--restarts", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    alphas = np.round(np.arange(args.start, args.stop + 0.5 * args.step, args.step), 12)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["alpha", "energy_m", "sigma", "norm_E", "norm_sup", "converged"])
    for alpha in alphas:
        if alpha * args.p <= 1:
            continue
        try:
            rep = ground_state(ProblemConfig(alpha=float(alpha), p=args.p, n=args.n,
                                             restarts=args.restarts, seed=args.seed))
        except FracNehariError as exc:
            print(f"alpha={alpha}: {exc}", file=sys.stderr)
            continue
        w.writerow([alpha, repr(rep.energy_m), repr(rep.sigma_bound), f"{rep.norm_E:.6g}",
                    f"{rep.norm_sup:.6g}", rep.converged])


if __name__ == "__main__":
    main()
