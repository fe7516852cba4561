import numpy as np
import pytest

from heisenberg_ibp.group import ConfigurationError, GroupPoint, OmegaForm
from heisenberg_ibp.paths import (CMPath, TimeGrid, WienerPath, build_xi, cm_inner, dump_csv, levy_integral,
                                  sample_wiener, shift_noise, translate_path, u_A)


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.dt == 0.25
    assert g.times[-1] == 2.0
    assert g.index_of(0.5) == 2
    assert g.coarsened(2) == TimeGrid(2.0, 4)
    with pytest.raises(ConfigurationError):
        g.index_of(0.3)
    with pytest.raises(ConfigurationError):
        TimeGrid(1.0, 0)


def test_wiener_basic(grid):
    W = sample_wiener(grid, 2, 1, seed=3)
    assert W.B.shape == (65, 2) and W.B0.shape == (65, 1)
    assert np.all(W.B[0] == 0) and np.all(W.B0[0] == 0)
    W2 = sample_wiener(grid, 2, 1, seed=3)
    np.testing.assert_array_equal(W.B, W2.B)
    np.testing.assert_array_equal(W.B0, W2.B0)


def test_wiener_variance():
    grid = TimeGrid(1.0, 8)
    W = sample_wiener(grid, 2, 1, seed=11, size=100_000)
    x = W.B[:, -1, 0]
    var = np.mean(x ** 2)
    se = np.std(x ** 2, ddof=1) / np.sqrt(x.size)
    assert abs(var - grid.T) <= 4 * se


def test_coarsen_matches_subsample(noise):
    c = noise.coarsen(4)
    np.testing.assert_array_equal(c.B, noise.B[:, ::4])
    assert c.grid.n == 16


def test_levy_integral_examples(omega):
    grid = TimeGrid(1.0, 8)
    v = np.array([0.4, -1.3])
    W = WienerPath(grid, np.outer(grid.times, v), np.zeros((9, 1)))
    np.testing.assert_allclose(levy_integral(W, omega), 0.0, atol=1e-15)

    grid2 = TimeGrid(2.0, 2)
    W2 = WienerPath(grid2, np.array([[0, 0], [1, 0], [1, 1]], float), np.zeros((3, 1)))
    S = levy_integral(W2, omega)
    assert S[2, 0] == pytest.approx(1.0)
    S_neg = levy_integral(W2, omega.scaled(-1.0))
    np.testing.assert_allclose(S_neg, -S)


def test_build_xi(noise, omega):
    flat = build_xi(noise, OmegaForm.zero(2, 1))
    np.testing.assert_array_equal(flat.w, noise.B)
    np.testing.assert_array_equal(flat.c, noise.B0)
    xi = build_xi(noise, omega)
    assert np.all(xi.w[:, 0] == 0) and np.all(xi.c[:, 0] == 0)


def test_xi_center_mean_zero(omega):
    grid = TimeGrid(1.0, 32)
    W = sample_wiener(grid, 2, 1, seed=12, size=100_000)
    c = build_xi(W, omega).at_end().c[:, 0]
    assert abs(c.mean()) <= 4 * c.std(ddof=1) / np.sqrt(c.size)


def test_translate_path(noise, omega, cm_factory):
    h = cm_factory(1)
    xi = build_xi(noise, omega)
    same = translate_path(h, xi, 0.0, omega)
    np.testing.assert_array_equal(same.w, xi.w)
    np.testing.assert_array_equal(same.c, xi.c)

    flat = OmegaForm.zero(2, 1)
    xf = build_xi(noise, flat)
    t = translate_path(h, xf, 0.5, flat)
    np.testing.assert_allclose(t.w, 0.5 * h.A + noise.B)
    np.testing.assert_allclose(t.c, 0.5 * h.a + noise.B0)

    central = CMPath(h.grid, np.zeros_like(h.dA), h.da)
    t = translate_path(central, xi, 2.0, omega)
    np.testing.assert_allclose(t.w, xi.w)
    np.testing.assert_allclose(t.c, xi.c + 2.0 * central.a)


def test_u_A_examples(omega):
    grid = TimeGrid(1.0, 2)
    zeroB = WienerPath(grid, np.zeros((3, 2)), np.zeros((3, 1)))
    line = CMPath(grid, np.tile([1.0, 0.0], (2, 1)), np.zeros((2, 1)))
    np.testing.assert_allclose(u_A(line, zeroB, 1.0, omega), 0.0)
    central = CMPath(grid, np.zeros((2, 2)), np.ones((2, 1)))
    np.testing.assert_allclose(u_A(central, zeroB, 1.0, omega), 0.0)

    # A through (0,0) -> (1,0) -> (1,1) on steps of length 1/2
    bent = CMPath(grid, np.array([[2.0, 0.0], [0.0, 2.0]]), np.zeros((2, 1)))
    u = u_A(bent, zeroB, 1.0, omega)
    # left point sums: step 0 has A=0; step 1 has 1/2 omega((1,0),(0,2)) * 1/2 = 1/2
    np.testing.assert_allclose(u[:, 0], [0.0, 0.0, 0.5])


def test_shift_noise_zero(noise, omega, cm_factory):
    h = cm_factory(2)
    s = shift_noise(noise, h, 0.0, omega)
    np.testing.assert_array_equal(s.B, noise.B)
    np.testing.assert_array_equal(s.B0, noise.B0)


def test_cm_inner(grid, cm_factory):
    h = cm_factory(3)
    assert cm_inner(h, h) == pytest.approx(h.energy()) and h.energy() >= 0
    h0 = GroupPoint([0.6, -0.8], [1.2])
    T = 2.0
    g = TimeGrid(T, 16)
    lift = CMPath.linear_lift(h0, g)
    assert lift.energy() == pytest.approx((0.36 + 0.64 + 1.44) / T)
    left = CMPath.from_knots(g, [0.0, 1.0], [[1.0, 2.0], [0.0, 0.0]], [[1.0], [0.0]])
    right = CMPath.from_knots(g, [0.0, 1.0], [[0.0, 0.0], [3.0, 1.0]], [[0.0], [2.0]])
    assert cm_inner(left, right) == 0.0


def test_cm_grid_mismatch(noise, omega):
    h = CMPath.zero(TimeGrid(1.0, 32), 2, 1)
    with pytest.raises(ConfigurationError):
        u_A(h, noise, 1.0, omega)


def test_dump_csv(tmp_path, grid, omega):
    W = sample_wiener(grid, 2, 1, seed=1)
    dump_csv(tmp_path / "p.csv", W, omega)
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "t,B1,B2,B0_1,xi_c1"
    assert len(rows) == grid.n + 2
    last = [float(x) for x in rows[-1].split(",")]
    assert last[1] == W.B[-1, 0]
    assert last[4] == build_xi(W, omega).c[-1, 0]
