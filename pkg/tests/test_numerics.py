import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasegeom import numerics as nm
from phasegeom.errors import NumericalError, ValidationError

SQRT_PI = math.sqrt(math.pi)


def test_grid_spacing():
    g = nm.Grid1D(-1.0, 1.0, 5)
    assert g.spacing == 0.5
    np.testing.assert_allclose(g.nodes, [-1, -0.5, 0, 0.5, 1])
    with pytest.raises(ValidationError):
        nm.Grid1D(0, 1, 1)
    with pytest.raises(ValidationError):
        nm.Grid1D(1, 0, 4)


def test_hermite_weight_and_moment():
    r = nm.gauss_hermite(20)
    assert abs(nm.integrate_1d(lambda x: np.ones_like(x), r) - SQRT_PI) < 1e-12
    assert abs(nm.integrate_1d(lambda x: x**2, r) - SQRT_PI / 2) < 1e-12


def test_hermite_fourier_oracle():
    # int exp(-x^2) e^{ix} dx = sqrt(pi) e^{-1/4}
    r = nm.gauss_hermite(30)
    val = nm.integrate_1d(lambda x: np.exp(1j * x), r)
    assert abs(val - SQRT_PI * math.exp(-0.25)) < 1e-10


@pytest.mark.parametrize("n", [5, 12, 25, 40])
def test_hermite_polynomial_exactness(n):
    r = nm.gauss_hermite(n)
    # int x^{2k} e^{-x^2} = Gamma(k + 1/2); scaled by the weight of the top monomial
    for deg in range(0, 2 * n):
        exact = 0.0 if deg % 2 else math.gamma(deg / 2 + 0.5)
        # int |x|^deg e^{-x^2} sets the scale of the cancellation for odd deg
        scale = math.gamma(deg / 2 + 0.5)
        got = nm.integrate_1d(lambda x: x**deg, r)
        assert abs(got - exact) <= 1e-12 * max(1.0, scale), (n, deg)


def test_legendre_and_tanh_sinh():
    gl = nm.gauss_legendre(10, 0.0, 2.0)
    assert abs(nm.integrate_1d(lambda x: x**3, gl) - 4.0) < 1e-13
    ts = nm.tanh_sinh(40, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        assert abs(nm.integrate_1d(lambda x: 1 / np.sqrt(x), ts) - 2.0) < 1e-8
    hl = nm.tanh_sinh_halfline(120)
    assert abs(nm.integrate_1d(lambda x: np.exp(-x * x), hl) - SQRT_PI / 2) < 1e-12


def test_nonfinite_node_reported():
    r = nm.gauss_legendre(4)
    with pytest.raises(NumericalError, match="node"):
        nm.integrate_1d(lambda x: 1.0 / (x - r.nodes[2]), r)


def test_fd_examples():
    assert abs(nm.fd_derivative(lambda x: x[0] ** 2, [1.0], 0, 1e-3) - 2) < 1e-6
    assert abs(nm.fd_derivative(lambda x: np.sin(x[0]), [0.0], 0, 1e-3, order=2)) < 1e-6
    with pytest.raises(ValidationError, match="step too small"):
        nm.fd_derivative(lambda x: x[0], [1.0], 0, 1e-15)


def test_fd_observed_order():
    hs = np.array([1e-1 / 2**k for k in range(5)])
    for order, exact in ((1, 1.0), (2, 1.0)):
        err = [abs(nm.fd_derivative(lambda x: np.exp(x[0]), [0.0], 0, h, order) - exact) for h in hs]
        slope = np.polyfit(np.log(hs), np.log(err), 1)[0]
        assert slope >= 1.95


def test_kahan_is_order_exact():
    v = np.array([1e16, 1.0, -1e16, 1.0])
    assert nm.kahan_sum(v) == 2.0
    assert nm.kahan_sum(v + 1j * v) == 2 + 2j


def test_bridge_pinned_and_single_step():
    p = nm.brownian_bridge([0.0, 1.0], [2.0, 3.0], 1, 1.0, seed=3)
    np.testing.assert_array_equal(p, [[0, 1], [2, 3]])
    p = nm.brownian_bridge([0.0], [1.0], 10, 2.0, seed=3)
    assert p[0, 0] == 0 and p[-1, 0] == 1 and p.shape == (11, 1)


def test_bridge_midpoint_statistics():
    nu = 4.0
    paths = nm.brownian_bridge([0.0], [0.0], 2, 1 / nu, seed=11, n_paths=100_000)
    mid = paths[:, 1, 0]
    # bridge over [0, 1]: Var(B_{1/2}) = rate * t/2 * (1 - 1/2) = rate/4
    var = 1 / nu / 4
    assert abs(mid.mean()) < 3 * math.sqrt(var / mid.size)
    assert abs(mid.var() / var - 1) < 0.05


def test_bridge_deterministic():
    a = nm.brownian_bridge([0.0, 0.0], [1.0, 0.0], 16, 1.0, seed=99, n_paths=7)
    b = nm.brownian_bridge([0.0, 0.0], [1.0, 0.0], 16, 1.0, seed=99, n_paths=7)
    assert np.array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=30), st.integers(min_value=0, max_value=20))
def test_hermite_monomials_property(n, k):
    if k >= 2 * n:
        return
    r = nm.gauss_hermite(n)
    exact = 0.0 if k % 2 else math.gamma(k / 2 + 0.5)
    scale = math.gamma(k / 2 + 0.5)
    assert abs(nm.integrate_1d(lambda x: x**k, r) - exact) <= 1e-12 * max(1.0, scale)
