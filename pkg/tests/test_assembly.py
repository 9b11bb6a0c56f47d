import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmc_eig.assembly import (GALERKIN, SUPG, assemble, assemble_full, element_matrices,
                               peclet, tau, write_matrix_market)
from mlmc_eig.eigensolvers import dense_eigenvalues
from mlmc_eig.mesh import build_mesh
from mlmc_eig.random_fields import Constant, FieldConfig, StreamField, grid_centers

NONE = np.zeros((0, 2))
W0 = np.zeros(0)


def cfg_const(ax, ay=0.0):
    return FieldConfig(centers=NONE, velocity=Constant(ax, ay))


@pytest.mark.parametrize("ax,h,want", [(50.0, 2**-3, 3.125), (0.0, 0.1, 0.0),
                                       (20.0, 2**-7, 0.078125)])
def test_peclet_examples(ax, h, want):
    assert peclet(h, [0.3, 0.4], cfg_const(ax), W0) == pytest.approx(want, rel=1e-15)


@pytest.mark.parametrize("ax,h,want", [(50.0, 2**-3, 1.25e-3), (0.0, 0.25, 0.25**2 / 12),
                                       (20.0, 2**-7, 2**-14 / 12)])
def test_tau_examples(ax, h, want):
    assert tau(h, [0.3, 0.4], cfg_const(ax), W0) == pytest.approx(want, rel=1e-15)


def test_tau_uses_effective_velocity():
    # t a = (25, 0): Pe = 25 * 0.125 / 2 = 1.5625 >= 1
    assert tau(0.125, [0.5, 0.5], cfg_const(50.0), W0, t=0.5) == pytest.approx(0.125 / 50)
    # t a = (5, 0): Pe < 1, diffusion branch
    assert tau(0.125, [0.5, 0.5], cfg_const(50.0), W0, t=0.1) == pytest.approx(0.125**2 / 12)
    with pytest.raises(ValueError):
        tau(0.0, [0.5, 0.5], cfg_const(1.0), W0)


def test_full_mass_sums_to_area():
    m = build_mesh(1)
    _, M = assemble_full(m, cfg_const(0.0), W0)
    assert M.sum() == pytest.approx(1.0, abs=1e-13)


def test_full_stiffness_kills_constants(case1_cfg):
    m = build_mesh(1)
    w = np.random.default_rng(0).random(25)
    A, _ = assemble_full(m, case1_cfg, w, t=0.0)
    assert np.abs(A @ np.ones(A.shape[0])).max() <= 1e-12


def test_laplacian_is_five_point_stencil():
    m = build_mesh(0)
    A = assemble(m, cfg_const(0.0), W0).A.toarray()
    # P1 on this diagonal mesh gives 4 on the diagonal and -1 to the axis neighbours
    assert np.allclose(np.diag(A), 4.0)
    off = A - np.diag(np.diag(A))
    assert set(np.round(np.unique(off), 14)) <= {-1.0, 0.0}
    assert np.all((off != 0).sum(axis=1) <= 4)


def test_interior_matches_restricted_full(case3_small_cfg):
    m = build_mesh(1)
    w = np.random.default_rng(1).random(case3_small_cfg.s)
    for kind in (GALERKIN, SUPG):
        sys = assemble(m, case3_small_cfg, w, kind, t=0.7)
        A, M = assemble_full(m, case3_small_cfg, w, kind, t=0.7)
        idx = m.interior
        np.testing.assert_allclose(sys.A.toarray(), A.toarray()[np.ix_(idx, idx)], atol=1e-12)
        np.testing.assert_allclose(sys.M.toarray(), M.toarray()[np.ix_(idx, idx)], atol=1e-15)


def test_csr_layout_and_shared_pattern(case1_cfg):
    sys = assemble(build_mesh(1), case1_cfg, np.full(25, 0.5), SUPG)
    for mat in (sys.A, sys.M):
        assert sp.isspmatrix_csr(mat)
        assert mat.has_sorted_indices
        for i in range(mat.shape[0]):
            row = mat.indices[mat.indptr[i]:mat.indptr[i + 1]]
            assert len(np.unique(row)) == len(row)
    np.testing.assert_array_equal(sys.A.indices, sys.M.indices)
    assert sys.n == build_mesh(1).n_interior


def test_convection_block_is_skew():
    m = build_mesh(1)
    parts = assemble_full(m, cfg_const(20.0, -7.0), W0, split=True)
    idx = m.interior
    B = parts["convection"].toarray()[np.ix_(idx, idx)]
    assert np.abs(B + B.T).max() <= 1e-12


def test_symmetry_at_t0_and_kind_consistency(case1_cfg):
    m = build_mesh(1)
    w = np.random.default_rng(2).random(25)
    g = assemble(m, case1_cfg, w, GALERKIN, t=0.0)
    s = assemble(m, case1_cfg, w, SUPG, t=0.0)
    assert abs(g.A - g.A.T).max() <= 1e-12
    assert abs(g.M - g.M.T).max() == 0.0
    assert (g.A != s.A).nnz == 0 and (g.M != s.M).nnz == 0
    assert np.linalg.eigvalsh(g.M.toarray()).min() > 0


def test_supg_terms_match_formula():
    m = build_mesh(0)
    cfg = cfg_const(50.0)
    stiff, conv, left, mass, right = element_matrices(m, cfg, W0, SUPG, t=1.0)
    _, _, left0, _, right0 = element_matrices(m, cfg, W0, GALERKIN)
    assert not left0.any() and not right0.any()
    e = 5
    p = m.nodes[m.triangles[e]]
    d1, d2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    G = np.linalg.inv(np.column_stack([np.ones(3), p]))[1:].T  # rows: grad phi_i
    bg = G @ np.array([50.0, 0.0])
    tau_e = m.h / 100.0
    np.testing.assert_allclose(left[e], tau_e * area * np.outer(bg, bg), rtol=1e-13)
    np.testing.assert_allclose(right[e], tau_e * area / 3 * np.outer(bg, np.ones(3)), rtol=1e-13)
    np.testing.assert_allclose(conv[e], area / 3 * np.outer(np.ones(3), bg), rtol=1e-13)


def test_homotopy_scales_convection():
    m = build_mesh(0)
    cfg = cfg_const(20.0)
    a0 = assemble(m, cfg, W0, t=0.0).A
    a1 = assemble(m, cfg, W0, t=1.0).A
    ah = assemble(m, cfg, W0, t=0.5).A
    assert abs(ah - (a0 + 0.5 * (a1 - a0))).max() <= 1e-12
    with pytest.raises(ValueError):
        assemble(m, cfg, W0, t=1.5)
    with pytest.raises(ValueError):
        assemble(m, cfg, W0, kind="gls")


def test_matrix_market_roundtrip(tmp_path, case1_cfg):
    sys = assemble(build_mesh(0), case1_cfg, np.full(25, 0.3), SUPG)
    pa, pm = write_matrix_market(sys, tmp_path / "sys")
    np.testing.assert_array_equal(scipy.io.mmread(pa).toarray(), sys.A.toarray())
    np.testing.assert_array_equal(scipy.io.mmread(pm).toarray(), sys.M.toarray())


@pytest.mark.parametrize("kind", [GALERKIN, SUPG])
def test_resolved_mesh_has_real_smallest_eigenvalue(kind):
    # h = 2^-5 resolves a = (50, 0); exact value 2 pi^2 + 625
    lam = dense_eigenvalues(assemble(build_mesh(2), cfg_const(50.0), W0, kind))[0]
    assert abs(lam.imag) <= 1e-8 * abs(lam)
    assert abs(lam.real - (2 * np.pi**2 + 625)) / 644.74 < 0.1


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=34, max_size=34), st.floats(0, 1))
def test_assembly_deterministic_and_mass_spd(w, t):
    cfg = FieldConfig(velocity=StreamField(centers=grid_centers(3)))
    m = build_mesh(0)
    a = assemble(m, cfg, w, GALERKIN, t)
    b = assemble(m, cfg, w, GALERKIN, t)
    assert (a.A != b.A).nnz == 0
    assert np.all(np.isfinite(a.A.data))
    assert np.linalg.eigvalsh(a.M.toarray()).min() > 0
