import itertools

import numpy as np
import pytest

from heisenberg_ibp.group import ConfigurationError, GroupPoint, OmegaForm
from heisenberg_ibp.ibp import enumerate_lambda, lift, phi, phi_recursion_check, phi_translated, psi
from heisenberg_ibp.paths import CMPath, TimeGrid, cm_inner, sample_wiener
from heisenberg_ibp.zfunc import fd_check, z1, z2

FLAT = OmegaForm.zero(2, 1)


def brute_partitions(m, max_block=4):
    """All labelings of 1..m, canonicalized to sets of blocks."""
    seen = set()
    for labels in itertools.product(range(m), repeat=m):
        blocks = {}
        for i, lab in enumerate(labels, start=1):
            blocks.setdefault(lab, []).append(i)
        part = frozenset(tuple(b) for b in blocks.values())
        if all(len(b) <= max_block for b in part):
            seen.add(part)
    return seen


@pytest.mark.parametrize("m,count", [(1, 1), (2, 2), (3, 5), (4, 15), (5, 51), (6, 196)])
def test_partition_counts(m, count):
    parts = enumerate_lambda(m)
    assert len(parts) == count
    assert {frozenset(p.blocks) for p in parts} == brute_partitions(m)


def test_partition_shape():
    assert [p.blocks for p in enumerate_lambda(1)] == [((1,),)]
    assert all(max(len(b) for b in p.blocks) <= 4 for p in enumerate_lambda(6))
    assert str(enumerate_lambda(2)[0]) in ("{1} | {2}", "{1,2}")
    with pytest.raises(ConfigurationError):
        enumerate_lambda(0)


def test_phi_small_orders(noise, omega, cm_factory):
    h1, h2 = cm_factory(1), cm_factory(2)
    np.testing.assert_array_equal(phi([h1], noise, omega), z1(h1, noise, omega))
    np.testing.assert_allclose(phi([h1, h2], noise, FLAT),
                               z1(h1, noise, FLAT) * z1(h2, noise, FLAT) - cm_inner(h1, h2), rtol=1e-12)
    np.testing.assert_allclose(phi([h1, h2], noise, omega),
                               z1(h1, noise, omega) * z1(h2, noise, omega) + z2(h1, h2, noise, omega), rtol=1e-12)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_phi_mean_zero(m, omega):
    grid = TimeGrid(1.0, 32)
    hs = [CMPath.from_knots(grid, [0.0, 0.5], [[0.3, -0.2 * k], [0.1 * k, 0.4]], [[0.5], [-0.3 + 0.2 * k]])
          for k in range(m)]
    W = sample_wiener(grid, 2, 1, seed=40 + m, size=100_000)
    x = phi(hs, W, omega)
    assert abs(x.mean()) <= 4 * x.std(ddof=1) / np.sqrt(x.size)


def test_phi_translated(noise, omega, cm_factory):
    h1, h2 = cm_factory(3), cm_factory(4)
    np.testing.assert_array_equal(phi_translated([h1, h2], h1, 0.0, noise, omega), phi([h1, h2], noise, omega))
    check = fd_check("phi1", lambda e: phi_translated([h1], h2, e, noise, omega), z2(h1, h2, noise, omega))
    assert check.passed
    for eps in (-1.0, 0.6):
        np.testing.assert_allclose(phi_translated([h1], h2, eps, noise, FLAT),
                                   z1(h1, noise, FLAT) - eps * cm_inner(h1, h2), rtol=1e-12, atol=1e-12)


def test_recursion(noise, omega, cm_factory):
    hs = [cm_factory(s) for s in range(4)]
    r1 = phi_recursion_check(hs[:1], hs[1], noise, omega)
    assert np.max(r1) <= 1e-14
    for m in (2, 3):
        assert np.max(phi_recursion_check(hs[:m], hs[m], noise, omega)) <= 1e-9
        assert np.max(phi_recursion_check(hs[:m], hs[m], noise, FLAT)) <= 1e-12


def test_recursion_detects_tampering(noise, omega, cm_factory, monkeypatch):
    from heisenberg_ibp import ibp
    hs = [cm_factory(s) for s in range(3)]
    real = ibp.enumerate_lambda

    def drop_one(m):
        parts = real(m)
        return parts[1:] if m == 3 else parts
    monkeypatch.setattr(ibp, "enumerate_lambda", drop_one)
    assert np.max(ibp.phi_recursion_check(hs[:2], hs[2], noise, omega)) > 1e-6


def test_psi(omega):
    T = 2.0
    grid = TimeGrid(T, 32)
    a = np.array([0.9])
    central = GroupPoint([0.0, 0.0], a)
    W = sample_wiener(grid, 2, 1, seed=50, size=100_000)
    x = psi([central], W, omega)
    np.testing.assert_allclose(x, W.B0[:, -1, 0] * a[0] / T, rtol=1e-12, atol=1e-14)
    v = x ** 2
    assert abs(v.mean() - a[0] ** 2 / T) <= 4 * v.std(ddof=1) / np.sqrt(v.size)
    h = GroupPoint([0.3, 1.1], [-0.4])
    assert lift([h], grid)[0].energy() == pytest.approx((0.09 + 1.21 + 0.16) / T)
    np.testing.assert_array_equal(psi([GroupPoint([0.0, 0.0], [0.0])], W, omega), 0.0)
