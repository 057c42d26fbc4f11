#!/usr/bin/env python3
"""Run shipped presets through the CLI and write their artifacts.

    python3 scripts/run_presets.py                 # all presets into ./results
    python3 scripts/run_presets.py paper_h05_estimator holder_h05 --out out
"""
import argparse
import sys
import time

from rieszwave.cli import run
from rieszwave.experiments import PRESETS


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", help="preset names (default: all)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--overwrite", action="store_true")
    args = ap.parse_args()
    names = args.names or sorted(PRESETS)
    status = 0
    for name in names:
        t0 = time.perf_counter()
        print(f"== {name}")
        argv = ["study", "--preset", name, "--out", args.out, "--workers", str(args.workers)]
        if args.overwrite:
            argv.append("--overwrite")
        code = run(argv)
        print(f"   exit {code} in {time.perf_counter() - t0:.1f}s")
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
