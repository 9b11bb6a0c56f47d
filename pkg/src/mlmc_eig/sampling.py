"""Reproducible Monte Carlo streams and randomly shifted rank-1 lattice rules.

Every Monte Carlo coordinate is a pure function of ``(seed, level, index, j)``:
a SplitMix64 finaliser is applied to a counter keyed by the triple, so any
sample can be regenerated on its own, in any order, on any worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

DEFAULT_SHIFTS = 32
DEFAULT_LATTICE = "lattice_cbc_s100_m20.txt"


def splitmix64(z: int) -> int:
    """SplitMix64 output function applied to a 64-bit integer."""
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def stream_key(seed: int, level: int, index: int) -> int:
    # negative levels are sentinels (lattice shifts); fold them into 64 bits
    k = splitmix64(seed & _MASK)
    k = splitmix64(k ^ (level & _MASK))
    return splitmix64(k ^ (index & _MASK))


def mc_samples(seed: int, level: int, indices, s: int) -> np.ndarray:
    """Uniform [0, 1) samples, one row per entry of ``indices``."""
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    keys = np.array([stream_key(seed, level, int(i)) for i in idx], dtype=np.uint64)
    counters = np.arange(s, dtype=np.uint64) * np.uint64(_GOLDEN)
    with np.errstate(over="ignore"):
        bits = _mix_array(keys[:, None] + counters[None, :])
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def mc_sample(seed: int, level: int, index: int, s: int) -> np.ndarray:
    if s < 0:
        raise ValueError("dimension must be nonnegative")
    return mc_samples(seed, level, [index], s)[0]


def shift_level(level: int) -> int:
    """Stream level used for the lattice shifts of multilevel level ``level``."""
    return -1 - level


@dataclass(frozen=True, eq=False)
class LatticeRule:
    """N-point rank-1 lattice with generating vector ``z`` and R random shifts."""

    z: np.ndarray
    N: int
    shifts: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.int64)
        shifts = np.atleast_2d(np.asarray(self.shifts, dtype=float))
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "shifts", shifts)
        if self.N < 1 or self.N & (self.N - 1):
            raise ValueError("N must be a power of 2")
        if np.any(z <= 0):
            raise ValueError("generating vector entries must be positive")
        if any(math.gcd(int(zj), self.N) != 1 for zj in z):
            raise ValueError("generating vector entries must be coprime with N")
        if shifts.shape[0] < 1 or shifts.shape[1] != z.size:
            raise ValueError("need at least one shift of matching dimension")

    @property
    def s(self) -> int:
        return int(self.z.size)

    @property
    def R(self) -> int:
        return int(self.shifts.shape[0])

    def points(self, shift_index: int, k=None) -> np.ndarray:
        """All points (or those at indices ``k``) for one shift."""
        k = np.arange(self.N, dtype=np.int64) if k is None else np.atleast_1d(k)
        base = np.outer(k, self.z) % self.N / self.N
        return np.mod(base + self.shifts[shift_index], 1.0)


def lattice_point(rule: LatticeRule, k: int, shift_index: int) -> np.ndarray:
    if not 0 <= k < rule.N:
        raise ValueError(f"point index {k} outside [0, {rule.N})")
    if not 0 <= shift_index < rule.R:
        raise ValueError(f"shift index {shift_index} outside [0, {rule.R})")
    return rule.points(shift_index, k)[0]


def read_generating_vector(path: str | Path | None = None) -> np.ndarray:
    """Read a generating vector: one integer per line, ``#`` starts a comment."""
    if path is None:
        text = resources.files("mlmc_eig").joinpath("data").joinpath(DEFAULT_LATTICE).read_text()
    else:
        text = Path(path).read_text()
    values = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            values.append(int(line))
    if not values:
        raise ValueError("generating vector file is empty")
    return np.array(values, dtype=np.int64)


def make_rule(z_full, s: int, N: int, R: int = DEFAULT_SHIFTS, seed: int = 0,
              level: int = 0) -> LatticeRule:
    """Lattice rule in dimension ``s`` with shifts drawn from the seed's sentinel stream."""
    z_full = np.asarray(z_full, dtype=np.int64)
    if s > z_full.size:
        raise ValueError(f"generating vector supports s <= {z_full.size}, need {s}")
    if R < 1:
        raise ValueError("need at least one shift")
    shifts = mc_samples(seed, shift_level(level), range(R), s)
    return LatticeRule(z_full[:s] % N if N > 1 else np.ones(s, dtype=np.int64), N, shifts)
