"""Uniform triangulations of the unit square and nodal transfer between levels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured P1 mesh of [0,1]^2.

    Nodes are numbered row by row (x fastest), every cell is cut along
    its bottom-left to top-right diagonal.
    """

    level: int
    h: float
    n_side: int
    nodes: np.ndarray
    triangles: np.ndarray
    interior: np.ndarray
    global_to_interior: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return self.n_side - 1

    @property
    def n_interior(self) -> int:
        return int(self.interior.size)

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def interior_values(self, f) -> np.ndarray:
        """Nodal values of ``f(x, y)`` at the interior nodes."""
        xy = self.nodes[self.interior]
        return np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)

    def to_full(self, v: np.ndarray) -> np.ndarray:
        """Pad an interior vector with the homogeneous Dirichlet values."""
        v = np.asarray(v)
        full = np.zeros(self.n_side**2, dtype=v.dtype)
        full[self.interior] = v
        return full


def _check_h0(h0: float) -> int:
    if not h0 > 0:
        raise ValueError(f"h0 must be positive, got {h0!r}")
    k = -math.log2(h0)
    if k < 1 or abs(k - round(k)) > 1e-12:
        raise ValueError(f"h0 must be 2**-k for an integer k >= 1, got {h0!r}")
    return int(round(k))


@lru_cache(maxsize=32)
def build_mesh(level: int, h0: float = 0.125) -> Mesh:
    """Mesh with width ``h0 * 2**-level``; cached, so treat it as read-only."""
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    k = _check_h0(h0) + int(level)
    n = 2**k
    h = 1.0 / n
    n_side = n + 1

    # exact dyadic coordinates
    ticks = np.arange(n_side) / n
    x, y = np.meshgrid(ticks, ticks)
    nodes = np.column_stack([x.ravel(), y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    p00 = (j * n_side + i).ravel()
    p10 = p00 + 1
    p01 = p00 + n_side
    p11 = p01 + 1
    lower = np.column_stack([p00, p10, p11])
    upper = np.column_stack([p00, p11, p01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    jj, ii = np.divmod(np.arange(n_side * n_side), n_side)
    inside = (ii > 0) & (ii < n) & (jj > 0) & (jj < n)
    interior = np.flatnonzero(inside)
    g2i = np.full(n_side * n_side, -1, dtype=np.int64)
    g2i[interior] = np.arange(interior.size)

    for arr in (nodes, triangles, interior, g2i):
        arr.setflags(write=False)
    return Mesh(level, h, n_side, nodes, triangles, interior, g2i)


def _p1_weights(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Global vertex indices and barycentric weights of the triangles holding ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = mesh.n_cells
    s = pts / mesh.h
    ci = np.clip(np.floor(s[:, 0]).astype(np.int64), 0, n - 1)
    cj = np.clip(np.floor(s[:, 1]).astype(np.int64), 0, n - 1)
    xi = s[:, 0] - ci
    eta = s[:, 1] - cj
    p00 = cj * mesh.n_side + ci
    p11 = p00 + mesh.n_side + 1
    below = xi >= eta
    # lower triangle (p00, p10, p11), upper triangle (p00, p11, p01)
    other = np.where(below, p00 + 1, p00 + mesh.n_side)
    idx = np.column_stack([p00, other, p11])
    w = np.column_stack([
        np.where(below, 1 - xi, 1 - eta),
        np.abs(xi - eta),
        np.where(below, eta, xi),
    ])
    return idx, w


def evaluate_p1(mesh: Mesh, v_full: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the P1 function with nodal values ``v_full`` at ``points``."""
    idx, w = _p1_weights(mesh, points)
    return (w * np.asarray(v_full)[idx]).sum(axis=1)


def prolongate(coarse: Mesh, fine: Mesh, v: np.ndarray) -> np.ndarray:
    """Interpolate an interior vector on ``coarse`` onto the interior nodes of ``fine``."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size != coarse.n_interior:
        raise ValueError(
            f"expected a vector of length {coarse.n_interior}, got shape {v.shape}"
        )
    _check_nested(coarse, fine)
    return evaluate_p1(coarse, coarse.to_full(v), fine.nodes[fine.interior])


def _check_nested(coarse: Mesh, fine: Mesh) -> None:
    ratio = coarse.h / fine.h
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-12 or round(ratio) & (round(ratio) - 1):
        raise ValueError("fine mesh must be a nested refinement of the coarse mesh")


@lru_cache(maxsize=32)
def prolongation_matrix(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    """Sparse form of :func:`prolongate`, assembled from the same point weights."""
    _check_nested(coarse, fine)
    idx, w = _p1_weights(coarse, fine.nodes[fine.interior])
    cols = coarse.global_to_interior[idx]
    rows = np.repeat(np.arange(fine.n_interior), 3)
    keep = cols.ravel() >= 0
    P = sp.coo_matrix(
        (w.ravel()[keep], (rows[keep], cols.ravel()[keep])),
        shape=(fine.n_interior, coarse.n_interior),
    )
    return P.tocsr()
