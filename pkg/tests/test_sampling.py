import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmc_eig.sampling import (LatticeRule, lattice_point, make_rule, mc_sample, mc_samples,
                               read_generating_vector, shift_level, splitmix64)


def test_splitmix64_reference_value():
    # first output of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_mc_sample_deterministic():
    a = mc_sample(7, 2, 11, 25)
    b = mc_sample(7, 2, 11, 25)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(mc_samples(7, 2, [11], 25)[0], a)
    assert np.all((a >= 0) & (a < 1))


def test_mc_sample_order_free():
    idx = [5, 0, 3]
    rows = mc_samples(1, 0, idx, 4)
    for i, r in zip(idx, rows):
        np.testing.assert_array_equal(mc_sample(1, 0, i, 4), r)


def test_mc_mean_of_first_coordinate():
    x = mc_samples(0, 0, range(100_000), 1)[:, 0]
    assert abs(x.mean() - 0.5) <= 0.005


def test_mc_no_collisions():
    x = mc_samples(3, 1, range(10_000), 1)[:, 0]
    assert len(np.unique(x)) == 10_000


def test_streams_differ_across_level_seed_and_shift_sentinel():
    base = mc_sample(0, 0, 0, 8)
    for other in (mc_sample(1, 0, 0, 8), mc_sample(0, 1, 0, 8), mc_sample(0, 0, 1, 8),
                  mc_sample(0, shift_level(0), 0, 8)):
        assert not np.array_equal(base, other)


def test_prefix_property():
    np.testing.assert_array_equal(mc_sample(4, 0, 9, 50)[:25], mc_sample(4, 0, 9, 25))


def test_lattice_examples():
    rule = LatticeRule(np.array([1, 1]), 4, np.zeros((1, 2)))
    np.testing.assert_array_equal(lattice_point(rule, 2, 0), [0.5, 0.5])
    np.testing.assert_array_equal(lattice_point(rule, 0, 0), [0.0, 0.0])
    with pytest.raises(ValueError):
        lattice_point(rule, 4, 0)
    with pytest.raises(ValueError):
        lattice_point(rule, 0, 1)


def test_lattice_validation():
    with pytest.raises(ValueError):
        LatticeRule(np.array([1, 2]), 4, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        LatticeRule(np.array([1, 3]), 6, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        LatticeRule(np.array([1, 3]), 8, np.zeros((0, 2)))


def test_lattice_group_structure_and_shift_equivariance():
    z = read_generating_vector()
    rule = make_rule(z, 6, 64, R=3, seed=2)
    base = LatticeRule(rule.z, rule.N, np.zeros((1, 6))).points(0)
    for k, m in [(3, 7), (60, 10), (0, 5)]:
        np.testing.assert_allclose(np.mod(base[k] + base[m], 1.0), base[(k + m) % 64], atol=1e-15)
    np.testing.assert_allclose(rule.points(1), np.mod(base + rule.shifts[1], 1.0), atol=1e-15)


def test_generating_vector_resource(tmp_path):
    z = read_generating_vector()
    assert z.size == 100 and z[0] == 1
    assert np.all(z % 2 == 1) and np.all(z < 2**20)
    f = tmp_path / "z.txt"
    f.write_text("# comment\n1\n\n3 # trailing\n")
    np.testing.assert_array_equal(read_generating_vector(f), [1, 3])
    f.write_text("# nothing\n")
    with pytest.raises(ValueError):
        read_generating_vector(f)
    with pytest.raises(ValueError):
        make_rule(z, 101, 16)


def test_embedded_points():
    z = read_generating_vector()
    small = make_rule(z, 10, 32, R=2, seed=1)
    big = make_rule(z, 10, 64, R=2, seed=1)
    np.testing.assert_allclose(big.points(0)[::2], small.points(0), atol=1e-15)


def test_shifted_rule_unbiased():
    s = 5
    rule = make_rule(read_generating_vector(), s, 256, R=16, seed=0)
    est = np.array([np.prod(rule.points(r) + 0.5, axis=1).mean() for r in range(rule.R)])
    exact = 1.0
    se = est.std(ddof=1) / np.sqrt(rule.R)
    assert abs(est.mean() - exact) <= 3 * se + 1e-12


def test_qmc_rate_on_smooth_integrand():
    z = read_generating_vector()
    logN, logE = [], []
    for m in range(4, 13):
        rule = make_rule(z, 8, 2**m, R=32, seed=0)
        est = np.array([np.prod(1 + 0.1 * (rule.points(r) - 0.5), axis=1).mean()
                        for r in range(32)])
        logN.append(m)
        logE.append(np.log2(np.mean((est - 1.0) ** 2)))
    assert np.polyfit(logN, logE, 1)[0] <= -1.5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(-5, 10), st.integers(0, 2**40), st.integers(1, 30))
def test_mc_sample_pure_function(seed, level, index, s):
    a = mc_sample(seed, level, index, s)
    assert a.shape == (s,)
    assert np.all((a >= 0) & (a < 1))
    np.testing.assert_array_equal(a, mc_sample(seed, level, index, s))
