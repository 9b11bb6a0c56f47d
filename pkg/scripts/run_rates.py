#!/usr/bin/env python3
"""Level statistics and fitted (alpha, beta, gamma) for the three test cases.

    python scripts/run_rates.py --samples 200 --out runs/rates
"""

import argparse
import json
from pathlib import Path

from mlmc_eig.cli import main

CASES = {
    "case1": ["--preset", "case1", "--disc", "galerkin"],
    "case1_homotopy": ["--preset", "case1", "--disc", "galerkin", "--homotopy"],
    "case2": ["--preset", "case2", "--disc", "supg"],
    "case3": ["--preset", "case3", "--disc", "supg"],
}


def run(args) -> None:
    out = Path(args.out)
    for name, flags in CASES.items():
        if args.cases and name not in args.cases:
            continue
        dest = out / name
        code = main(["rates", *flags, "--levels", str(args.levels), "--samples",
                     str(args.samples), "--seed", str(args.seed), "--out", str(dest),
                     *(["--workers", str(args.workers)] if args.workers else [])])
        if code:
            raise SystemExit(code)
        rates = json.loads((dest / "summary.json").read_text())["rates"]
        print(name, rates)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--cases", nargs="*", choices=sorted(CASES))
    ap.add_argument("--out", default="runs/rates")
    run(ap.parse_args())
