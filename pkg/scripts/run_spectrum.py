#!/usr/bin/env python3
"""Smallest eigenvalues of one strong-convection sample, Galerkin and SUPG side by side.

    python scripts/run_spectrum.py --h 2^-3 -k 20 --out runs/spectrum
"""

import argparse
import json
from pathlib import Path

from mlmc_eig.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", default="2^-3")
    ap.add_argument("-k", type=int, default=20)
    ap.add_argument("--sample-index", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/spectrum")
    a = ap.parse_args()
    for disc in ("galerkin", "supg"):
        dest = Path(a.out) / disc
        code = main(["spectrum", "--preset", "case2", "--disc", disc, "--h", a.h, "-k", str(a.k),
                     "--sample-index", str(a.sample_index), "--seed", str(a.seed),
                     "--out", str(dest)])
        if code:
            raise SystemExit(code)
        s = json.loads((dest / "summary.json").read_text())
        print(disc, "unstable" if s["unstable"] else "stable", s["eigenvalues"][:3])
