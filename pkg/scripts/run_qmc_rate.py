#!/usr/bin/env python3
"""Lattice versus Monte Carlo MSE decay for the level-0 eigenvalue of a reduced Test Case III.

    python scripts/run_qmc_rate.py --grid 3 --m-max 10 --out runs/qmc_rate
"""

import argparse

from mlmc_eig.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=3, help="kernel grid per side for both fields")
    ap.add_argument("--m-min", type=int, default=4)
    ap.add_argument("--m-max", type=int, default=10)
    ap.add_argument("--shifts", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="runs/qmc_rate")
    a = ap.parse_args()
    g = str(a.grid)
    raise SystemExit(main([
        "qmc-rate", "--preset", "custom", "--disc", "supg", "--velocity-kind", "stream",
        "--grid", g, g, "--velocity-grid", g, g, "--m-min", str(a.m_min), "--m-max", str(a.m_max),
        "--shifts", str(a.shifts), "--seed", str(a.seed), "--out", a.out,
        *(["--workers", str(a.workers)] if a.workers else [])]))
