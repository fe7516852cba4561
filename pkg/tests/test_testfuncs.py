import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenberg_ibp.group import ConfigurationError, GroupPoint, OmegaForm, multiply, omega_apply
from heisenberg_ibp.paths import CMPath, TimeGrid, build_xi, sample_wiener, translate_path
from heisenberg_ibp.testfuncs import (CylinderFunction, TestFunction, evaluate, invert_precompose,
                                      iterated_left_derive, iterated_right_derive, left_derive, random_trig_function,
                                      right_derive)

STD = OmegaForm.standard(2, 1)
RAND = OmegaForm.random(3, 2, seed=4)


def rand_points(rng, n, d, N, scale=2.0):
    return GroupPoint(scale * rng.standard_normal((n, d)), scale * rng.standard_normal((n, N)))


def test_evaluation_examples():
    c = TestFunction.linear([0, 0], [1])
    assert evaluate(c, GroupPoint([3.0, 4.0], [-1.5])) == pytest.approx(-1.5)
    s = TestFunction.sin([1, 0], [0])
    assert evaluate(s, GroupPoint([np.pi / 2, 0.0], [7.0])) == pytest.approx(1.0)
    f = 2.0 * TestFunction.linear([1, 0], [0]) * TestFunction.cos([0, 1], [1])
    g = GroupPoint([1.5, 0.25], [0.5])
    assert evaluate(f, g) == pytest.approx(2 * 1.5 * np.cos(0.75))


def test_algebra_and_canonical_form():
    a = TestFunction.sin([1, 2], [0.5], const=0.1)
    b = TestFunction.cos([0, 1], [-1])
    g = GroupPoint(np.array([[0.3, -0.2], [1.0, 2.0]]), np.array([[0.4], [-0.7]]))
    np.testing.assert_allclose(evaluate(a + b, g), evaluate(a, g) + evaluate(b, g))
    np.testing.assert_allclose(evaluate(a * b, g), evaluate(a, g) * evaluate(b, g))
    assert (a - a).is_zero()
    assert a * b == b * a
    # sign normalization: sin(-L) = -sin(L), cos(-L) = cos(L)
    assert TestFunction.sin([-1, -2], [-0.5], const=-0.1) == -1.0 * a
    assert TestFunction.cos([0, -1], [1]) == b
    with pytest.raises(ConfigurationError):
        a + TestFunction.linear([1, 0, 0], [0])


def test_serialization_roundtrip():
    f = random_trig_function(2, 1, np.random.default_rng(3), n_terms=4)
    assert TestFunction.from_dict(f.to_dict()) == f
    assert "sin" in str(TestFunction.sin([1, 0], [0])) or "cos" in str(TestFunction.sin([1, 0], [0]))


def test_right_derive_examples():
    lc = np.array([1.5])
    A, a = np.array([0.3, -0.7]), np.array([0.4])
    h = GroupPoint(A, a)
    f = TestFunction.linear([0, 0], lc)
    rng = np.random.default_rng(0)
    g = rand_points(rng, 10, 2, 1)
    expected = lc @ a + 0.5 * omega_apply(A, g.w, STD) @ lc
    np.testing.assert_allclose(evaluate(right_derive(f, h, STD), g), expected, rtol=1e-12)
    lam = np.array([2.0, -1.0])
    np.testing.assert_allclose(evaluate(right_derive(TestFunction.linear(lam, [0]), h, STD), g), lam @ A)
    central = GroupPoint([0.0, 0.0], a)
    d1 = right_derive(f, central, STD)
    np.testing.assert_allclose(evaluate(d1, g), lc @ a)
    assert right_derive(d1, h, STD).is_zero()


def test_left_derive_examples():
    lc = np.array([1.5])
    h = GroupPoint([0.3, -0.7], [0.4])
    f = TestFunction.linear([0, 0], lc)
    g = rand_points(np.random.default_rng(1), 10, 2, 1)
    expected = lc @ h.c - 0.5 * omega_apply(h.w, g.w, STD) @ lc
    np.testing.assert_allclose(evaluate(left_derive(f, h, STD), g), expected, rtol=1e-12)
    flat = OmegaForm.zero(2, 1)
    r = random_trig_function(2, 1, np.random.default_rng(2))
    assert left_derive(r, h, flat) == right_derive(r, h, flat)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    f = random_trig_function(3, 2, rng, n_terms=3, scale=0.7)
    h = rand_points(rng, 1, 3, 2, scale=1.0)
    h = GroupPoint(h.w[0], h.c[0])
    g = rand_points(rng, 8, 3, 2, scale=1.0)
    eps = 1e-5
    fd_r = (evaluate(f, multiply(h.scaled(eps), g, RAND)) - evaluate(f, multiply(h.scaled(-eps), g, RAND))) / (2 * eps)
    fd_l = (evaluate(f, multiply(g, h.scaled(eps), RAND)) - evaluate(f, multiply(g, h.scaled(-eps), RAND))) / (2 * eps)
    scale = 1 + np.max(np.abs(fd_r))
    np.testing.assert_allclose(evaluate(right_derive(f, h, RAND), g), fd_r, atol=1e-6 * scale)
    np.testing.assert_allclose(evaluate(left_derive(f, h, RAND), g), fd_l, atol=1e-6 * scale)


def test_left_right_inversion_identity():
    rng = np.random.default_rng(12)
    for _ in range(20):
        f = random_trig_function(3, 2, rng, n_terms=3)
        u = invert_precompose(f)
        h = GroupPoint(rng.standard_normal(3), rng.standard_normal(2))
        g = GroupPoint(rng.standard_normal(3), rng.standard_normal(2))
        lhs = evaluate(left_derive(f, h, RAND), g)
        rhs = -evaluate(right_derive(u, h, RAND), -g)
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


def test_invert_precompose():
    f = random_trig_function(2, 1, np.random.default_rng(5))
    assert invert_precompose(invert_precompose(f)) == f
    lam = TestFunction.linear([1.0, 2.0], [0.5])
    assert invert_precompose(lam) == -1.0 * lam
    c = TestFunction.cos([1.0, 2.0], [0.5])
    assert invert_precompose(c) == c


def test_iterated_derivatives():
    lc = np.array([2.0])
    h1 = GroupPoint([0.3, -0.7], [0.4])
    h2 = GroupPoint([1.1, 0.2], [-0.9])
    f = TestFunction.linear([0, 0], lc)
    d2 = iterated_right_derive(f, [h1, h2], STD)
    g = rand_points(np.random.default_rng(3), 5, 2, 1)
    np.testing.assert_allclose(evaluate(d2, g), 0.5 * lc @ omega_apply(h2.w, h1.w, STD))
    assert iterated_right_derive(f, [h1, h2, h1], STD).is_zero()
    assert iterated_right_derive(TestFunction.constant(2, 1, 3.0), [h1], STD).is_zero()
    # the outermost direction is applied last
    assert d2 == right_derive(right_derive(f, h2, STD), h1, STD)
    assert d2 != iterated_right_derive(f, [h2, h1], STD)
    dl = iterated_left_derive(f, [h1, h2], STD)
    assert dl == left_derive(left_derive(f, h2, STD), h1, STD)


def test_bound_certificate():
    rng = np.random.default_rng(8)
    for _ in range(10):
        f = random_trig_function(2, 1, rng, n_terms=4, max_atoms=3)
        K, M = f.bound()
        g = rand_points(rng, 2000, 2, 1, scale=5.0)
        assert np.all(np.abs(evaluate(f, g)) <= K * (1 + g.norm()) ** M + 1e-12)


def test_cylinder_derivative_matches_path_shift(omega):
    grid = TimeGrid(1.0, 16)
    rng = np.random.default_rng(6)
    parts = [random_trig_function(2, 1, rng, n_terms=2, scale=0.5) for _ in range(2)]
    F = CylinderFunction.from_parts([0.5, 1.0], parts)
    h = CMPath.from_knots(grid, [0.0, 0.25], [[0.4, -0.3], [0.2, 0.8]], [[0.5], [-0.6]])
    xi = build_xi(sample_wiener(grid, 2, 1, seed=2, size=20), omega)
    eps = 1e-5
    fd = (F(translate_path(h, xi, eps, omega), grid) - F(translate_path(h, xi, -eps, omega), grid)) / (2 * eps)
    dF = F.right_derive(h, omega)
    np.testing.assert_allclose(dF(xi, grid), fd, atol=1e-7 * (1 + np.max(np.abs(fd))))
    # product structure
    direct = evaluate(parts[0], xi.at(8)) * evaluate(parts[1], xi.at(16))
    np.testing.assert_allclose(F(xi, grid), direct, rtol=1e-12)


def test_cylinder_validation():
    f = TestFunction.linear([1, 0], [0])
    with pytest.raises(ConfigurationError):
        CylinderFunction((1.0, 0.5), f, 2, 1)
    with pytest.raises(ConfigurationError):
        CylinderFunction.at_time(f, 0.3).indices(TimeGrid(1.0, 4))
