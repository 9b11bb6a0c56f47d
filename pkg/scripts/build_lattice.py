#!/usr/bin/env python3
"""Offline embedded CBC construction of a base-2 rank-1 lattice generating vector.

Product weights gamma_j = 1/j^2, shift-averaged worst-case error in the
unanchored Sobolev space of smoothness one. Candidates are odd integers
below 2**m_max; each component minimises the worst ratio, over all embedded
sizes 2**m_min .. 2**m_max, of its squared error to the best error reachable
for that size. The inner sums over odd residues use the group structure
(Z/2^m)^* = {+-1} x <5>, which turns them into 2-D cyclic correlations.

    python scripts/build_lattice.py --s 100 --m-max 20 \
        --out src/mlmc_eig/data/lattice_cbc_s100_m20.txt
"""

import argparse
import time

import numpy as np


def bernoulli2(x):
    return x * x - x + 1.0 / 6.0


def discrete_log_tables(m):
    """(sign, exponent) coordinates of the odd residues mod 2**m, m >= 2."""
    n = 1 << m
    order = max(1, n >> 2)
    elems = np.empty((2, order), dtype=np.int64)
    v = 1
    for i in range(order):
        elems[0, i] = v
        elems[1, i] = (-v) % n
        v = (v * 5) % n
    return elems


def group_correlation(q_by_value, w_by_value, m):
    """F(z) = sum_{u odd} q(u) w(u z mod 2^m) for every odd z, indexed by value."""
    n = 1 << m
    F = np.zeros(n)
    if m == 1:
        F[1] = q_by_value[1] * w_by_value[1]
        return F
    elems = discrete_log_tables(m)
    Q = q_by_value[elems]
    W = w_by_value[elems]
    corr = np.fft.ifft2(np.conj(np.fft.fft2(Q)) * np.fft.fft2(W)).real
    F[elems] = corr
    return F


def build(s, m_max, m_min):
    M = m_max
    NM = 1 << M
    k = np.arange(NM, dtype=np.int64)
    P = np.ones(NM)
    cand = np.arange(1, NM, 2, dtype=np.int64)
    z = []
    for j in range(1, s + 1):
        gamma = 1.0 / j**2
        t0 = time.time()
        if j == 1:
            zj = 1
        else:
            # F_{m'} for m' = 1..M; q(u) = P(2^{M-m'} u)
            S = np.full(cand.size, P[0] * bernoulli2(0.0))
            worst = np.zeros(cand.size)
            for mp in range(1, M + 1):
                n = 1 << mp
                q = P[(np.arange(n) << (M - mp)) % NM]
                w = bernoulli2(np.arange(n) / n)
                F = group_correlation(q, w, mp)
                S += F[cand % n]
                if mp >= m_min:
                    base = P[(np.arange(n) << (M - mp)) % NM].sum()
                    e2 = (base + gamma * S) / n - 1.0
                    worst = np.maximum(worst, e2 / e2.min())
            zj = int(cand[np.argmin(worst)])
        z.append(zj)
        P *= 1.0 + gamma * bernoulli2((k * zj % NM) / NM)
        print(f"j={j:3d} z={zj:8d} ({time.time() - t0:.2f}s)", flush=True)
    return z


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=int, default=100)
    ap.add_argument("--m-max", type=int, default=20)
    ap.add_argument("--m-min", type=int, default=4)
    ap.add_argument("--out", default="src/mlmc_eig/data/lattice_cbc_s100_m20.txt")
    args = ap.parse_args()
    z = build(args.s, args.m_max, args.m_min)
    with open(args.out, "w") as fh:
        fh.write(f"# embedded rank-1 lattice, base 2, N = 2^{args.m_min}..2^{args.m_max}\n")
        fh.write(f"# CBC, product weights 1/j^2, s = {args.s}\n")
        for zj in z:
            fh.write(f"{zj}\n")


if __name__ == "__main__":
    main()
