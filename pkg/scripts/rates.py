#!/usr/bin/env python3
"""Fitted convergence exponents next to the theoretical ones.

Linear QV (squared L2 error in N), nonlinear QV (L1 error in N), remainder
(L2 norm in eps, both signs) and Hoelder scaling (RMS increment in eps).
Use --replicates to run a quicker, noisier version.
"""
import argparse
from dataclasses import replace

from rieszwave.experiments import preset, run_study

NAMES = ("linear_qv_h05", "linear_qv_h075", "qv_convergence_h05", "remainder_h05",
         "remainder_h075", "holder_h05", "holder_h075")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", default=NAMES)
    ap.add_argument("--replicates", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    for name in args.names:
        cfg = preset(name)
        if args.replicates:
            cfg = replace(cfg, replicates=args.replicates)
        rep = run_study(cfg, workers=args.workers)
        for key, fit in rep.rate_fits.items():
            slope = fit["slope"]
            s = "undefined" if slope is None else f"{slope:+.3f}"
            print(f"{name:20s} {key:12s} slope {s}  target {fit['target']:+.3f} "
                  f"+/- {fit.get('tolerance', float('nan')):.2f}  pass={fit.get('pass')}")


if __name__ == "__main__":
    main()
