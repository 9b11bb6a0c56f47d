#!/usr/bin/env python3
"""Total cost versus target RMSE for MC, MLMC and MLQMC on Test Case I.

Writes one complexity.csv per method and prints the log-log slopes.

    python scripts/run_complexity.py --eps 0.2 0.1 0.05 --out runs/complexity
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from mlmc_eig.cli import main


def slope(path: Path) -> float:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    eps = np.array([float(r["eps"]) for r in rows])
    cost = np.array([float(r["total_cost_s"]) for r in rows])
    return float(np.polyfit(np.log2(eps), np.log2(cost), 1)[0])


def run(args) -> None:
    eps = [str(e) for e in args.eps]
    for method in args.methods:
        dest = Path(args.out) / method
        code = main([method, "--preset", args.preset, "--eps", *eps, "--seed", str(args.seed),
                     "--cost", args.cost, "--out", str(dest),
                     *(["--workers", str(args.workers)] if args.workers else [])])
        if code:
            raise SystemExit(code)
        print(f"{method}: cost ~ eps^{slope(dest / 'complexity.csv'):.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    ap.add_argument("--methods", nargs="+", default=["mlmc", "mlqmc", "mc"],
                    choices=["mc", "mlmc", "mlmc-homotopy", "mlqmc"])
    ap.add_argument("--preset", default="case1")
    ap.add_argument("--cost", choices=["model", "measured"], default="model")
    ap.add_argument("--seed", type=int, default=12)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="runs/complexity")
    run(ap.parse_args())
