"""P1 Galerkin and SUPG matrices for the convection-diffusion eigenproblem."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .random_fields import FieldConfig, check_sample, eval_kappa, eval_velocity
from .mesh import Mesh

GALERKIN = "galerkin"
SUPG = "supg"
KINDS = (GALERKIN, SUPG)


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Pencil (A, M) on the interior nodes: A u = lambda M u."""

    A: sp.csr_matrix
    M: sp.csr_matrix
    kind: str
    t: float
    mesh_level: int

    @property
    def n(self) -> int:
        return self.A.shape[0]


def peclet(h_elem, x, cfg: FieldConfig, omega):
    """Mesh Peclet number |a| h / (2 kappa)."""
    speed = np.linalg.norm(eval_velocity(cfg, omega, x), axis=-1)
    return speed * h_elem / (2.0 * eval_kappa(cfg, omega, x))


def _tau(h, speed, kappa):
    pe = speed * h / (2.0 * kappa)
    with np.errstate(divide="ignore"):
        adv = h / (2.0 * speed)
    return np.where(pe >= 1.0, adv, h * h / (12.0 * kappa))


def tau(h_elem, x, cfg: FieldConfig, omega, t: float = 1.0):
    """SUPG parameter from the asymptotic switch on the Peclet number of ``t * a``."""
    if h_elem <= 0:
        raise ValueError("element size must be positive")
    speed = abs(t) * np.linalg.norm(eval_velocity(cfg, omega, x), axis=-1)
    return _tau(h_elem, speed, eval_kappa(cfg, omega, x))


def _element_geometry(mesh: Mesh):
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    grads = np.empty((len(area), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = y[:, j] - y[:, k]
        grads[:, i, 1] = x[:, k] - x[:, j]
    grads /= (2.0 * area)[:, None, None]
    return area, grads


def element_matrices(mesh: Mesh, cfg: FieldConfig, omega, kind: str = GALERKIN,
                     t: float = 1.0):
    """Local 3x3 blocks (rows = test function, columns = trial function).

    Returns ``(stiffness, convection, supg_left, mass, supg_right)``, each of
    shape (n_triangles, 3, 3). The SUPG blocks are zero for Galerkin.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown discretization {kind!r}")
    if not 0.0 <= t <= 1.0:
        raise ValueError("homotopy parameter must lie in [0, 1]")
    w = check_sample(cfg, omega)
    area, grads = _element_geometry(mesh)
    xc = mesh.centroids()
    kap = eval_kappa(cfg, w, xc)
    b = t * eval_velocity(cfg, w, xc)

    stiff = (kap * area)[:, None, None] * np.einsum("eid,ejd->eij", grads, grads)
    bgrad = np.einsum("ed,eid->ei", b, grads)
    conv = np.broadcast_to((area / 3.0)[:, None, None] * bgrad[:, None, :], stiff.shape)
    mass = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    if kind == SUPG:
        speed = np.linalg.norm(b, axis=1)
        tau_e = _tau(mesh.h, speed, kap)
        left = (tau_e * area)[:, None, None] * bgrad[:, :, None] * bgrad[:, None, :]
        right = np.broadcast_to(
            (tau_e * area / 3.0)[:, None, None] * bgrad[:, :, None], stiff.shape)
    else:
        left = np.zeros_like(stiff)
        right = np.zeros_like(stiff)
    return stiff, conv, left, mass, right


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_side**2
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_full(mesh: Mesh, cfg: FieldConfig, omega, kind: str = GALERKIN,
                  t: float = 1.0, split: bool = False):
    """Matrices over all nodes, before Dirichlet elimination.

    With ``split=True`` returns a dict of the separate operators
    (stiffness, convection, supg_left, mass, supg_right).
    """
    parts = element_matrices(mesh, cfg, omega, kind, t)
    if split:
        names = ("stiffness", "convection", "supg_left", "mass", "supg_right")
        return {k: _scatter(mesh, v) for k, v in zip(names, parts)}
    stiff, conv, left, mass, right = parts
    return _scatter(mesh, stiff + conv + left), _scatter(mesh, mass + right)


def restrict(mesh: Mesh, mat: sp.spmatrix) -> sp.csr_matrix:
    idx = mesh.interior
    out = sp.csr_matrix(mat)[idx][:, idx].tocsr()
    out.sort_indices()
    return out


@lru_cache(maxsize=32)
def _interior_pattern(mesh: Mesh):
    """Shared CSR pattern of the interior operators and the map from local entries into it."""
    g = mesh.global_to_interior[mesh.triangles]
    rows = np.repeat(g, 3, axis=1).ravel()
    cols = np.tile(g, (1, 3)).ravel()
    keep = np.flatnonzero((rows >= 0) & (cols >= 0))
    n = mesh.n_interior
    keys, slot = np.unique(rows[keep] * n + cols[keep], return_inverse=True)
    indptr = np.searchsorted(keys // n, np.arange(n + 1)).astype(np.int32)
    indices = (keys % n).astype(np.int32)
    for arr in (keep, slot, indptr, indices):
        arr.setflags(write=False)
    return keep, slot, indptr, indices


def _interior_csr(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    keep, slot, indptr, indices = _interior_pattern(mesh)
    data = np.bincount(slot, weights=local.reshape(-1)[keep], minlength=indices.size)
    n = mesh.n_interior
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def assemble(mesh: Mesh, cfg: FieldConfig, omega, kind: str = GALERKIN,
             t: float = 1.0) -> AssembledSystem:
    """Interior-node pencil; A and M share one CSR sparsity pattern."""
    stiff, conv, left, mass, right = element_matrices(mesh, cfg, omega, kind, t)
    A = _interior_csr(mesh, stiff + conv + left)
    M = _interior_csr(mesh, mass + right)
    return AssembledSystem(A, M, kind, float(t), mesh.level)


def write_matrix_market(system: AssembledSystem, prefix: str | Path) -> tuple[Path, Path]:
    """Dump A and M as ``<prefix>_A.mtx`` and ``<prefix>_M.mtx``."""
    prefix = Path(prefix)
    pa = prefix.with_name(prefix.name + "_A.mtx")
    pm = prefix.with_name(prefix.name + "_M.mtx")
    comment = f"kind={system.kind} t={system.t!r} level={system.mesh_level}"
    scipy.io.mmwrite(pa, system.A, comment=comment, precision=17)
    scipy.io.mmwrite(pm, system.M, comment=comment, precision=17)
    return pa, pm
