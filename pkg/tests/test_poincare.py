import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from phasegeom import poincare as P
from phasegeom import uncertainty as un
from phasegeom.errors import NumericalError, ValidationError


def kappa_oracle(sigma):
    # <sqrt(1 + r^2)> for a 3D Gaussian with variance sigma^2/2 per axis
    f = lambda r: 4 * math.pi * r * r * math.exp(-r * r / sigma**2) * math.sqrt(1 + r * r)
    val, _ = integrate.quad(f, 0, 12 * sigma, epsabs=0, epsrel=1e-13, limit=200)
    return val / (math.pi * sigma**2) ** 1.5


def alpha_oracle(sigma):
    # int_0^oo e^{-a x^2}/(1+x^2) = (pi/2) erfcx(sqrt a)
    return math.sqrt(math.pi) / (2 * sigma) * special.erfcx(1 / sigma)


def brute_overlap(a, b, half_width=1.5, n=121):
    g = np.linspace(-half_width, half_width, n)
    h = g[1] - g[0]
    v = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    xi = np.column_stack([np.sqrt(1 + np.sum(v * v, 1)), v])
    return np.sum(np.conj(a.wavefunction(xi)) * b.wavefunction(xi) * a.m**2 / (2 * xi[:, 0])) * h**3


# ------------------------------------------------------------------- boosts

def test_boost_identity_and_example():
    assert np.allclose(P.boost_matrix((0, 0, 0)), np.eye(4), atol=0)
    L = P.boost_matrix((1.0, 0, 0))
    assert np.allclose(L @ P.REST, [math.sqrt(2), 1, 0, 0], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_boost_is_lorentz_and_inverts(u):
    L = P.boost_matrix(u)
    assert np.allclose(L.T @ P.ETA @ L, P.ETA, atol=1e-12 * (1 + np.dot(u, u)))
    Linv = P.boost_matrix([-v for v in u])
    assert np.allclose(Linv, np.linalg.inv(L), atol=1e-12 * (1 + np.dot(u, u)))
    assert np.allclose(L @ P.REST, P.UnitTimelike(tuple(u)).array, atol=1e-12 * (1 + np.dot(u, u)))


def test_unit_timelike_validation():
    with pytest.raises(ValidationError):
        P.UnitTimelike.from_four((-1.0, 0, 0, 0))
    with pytest.raises(ValidationError):
        P.UnitTimelike.from_four((2.0, 0, 0, 0))
    with pytest.raises(ValidationError):
        P.PoincareState.at(sigma=0.0)
    with pytest.raises(ValidationError):
        P.FourVector((1.0, math.nan, 0, 0))
    I = P.UnitTimelike((0.3, -0.4, 1.2))
    assert P.mdot(I.array, I.array) == pytest.approx(1.0, abs=1e-12)


# ----------------------------------------------------------------- overlaps

def test_normalization_printed_vs_computed():
    for sigma in (0.1, 0.3):
        nrm = P.reference_normalization(sigma, 2.0)
        assert nrm["printed_norm2"] == pytest.approx((math.pi * sigma**2) ** -1.5, rel=1e-12)
        assert nrm["prefactor"] == pytest.approx(nrm["closed_form_prefactor"], rel=1e-12)


@pytest.mark.parametrize("I", [(0, 0, 0), (0.7, -0.2, 0.4), (2.0, 1.0, -1.5)])
def test_self_overlap_is_one(I):
    s = P.PoincareState.at(x=(0.3, 1, -2), t=0.7, I=I, sigma=0.15, m=1.3)
    assert P.overlap(s, s) == pytest.approx(1.0, abs=1e-8)


def test_overlap_matches_brute_force_sum():
    a = P.PoincareState.at(sigma=0.2)
    b = P.PoincareState.at(x=(0.5, 1.0, -0.3), I=(0.1, 0.05, -0.2), sigma=0.2)
    assert P.overlap(b, a) == pytest.approx(brute_overlap(b, a), abs=1e-10)
    assert P.overlap(a, b) == pytest.approx(np.conj(P.overlap(b, a)), abs=1e-14)


def test_spacelike_shift_envelope():
    # rest frame: |<0|d>| is the Fourier transform of a Gaussian, exp(-m^2 sigma^2 d^2 / 4)
    a = P.PoincareState.at(sigma=0.1, m=2.0)
    prev = 1.0
    for d in (0.5, 2, 5, 10, 20):
        v = abs(P.overlap(a, P.PoincareState.at(x=(0, d, 0), sigma=0.1, m=2.0)))
        assert v == pytest.approx(math.exp(-(2.0 * 0.1 * d) ** 2 / 4), rel=1e-9)
        assert v < prev
        prev = v


def test_poincare_invariance():
    rng = np.random.default_rng(7)
    for _ in range(5):
        a = P.PoincareState.at(x=rng.normal(0, 1, 3), t=rng.normal(), I=rng.normal(0, 0.3, 3), sigma=0.1)
        b = P.PoincareState.at(x=rng.normal(0, 1, 3), t=rng.normal(), I=a.I + rng.normal(0, 0.1, 3), sigma=0.1)
        L = P.boost_matrix(rng.normal(0, 0.5, 3)) @ P.rotation_matrix(rng.normal(size=3), rng.uniform(0, 6))
        v = P.overlap(a, b)
        assert abs(v) <= 1 + 1e-6
        assert P.overlap(a.transformed(L), b.transformed(L)) == pytest.approx(v, abs=1e-6)
        Y = rng.normal(0, 1, 4)
        assert P.overlap(a.translated(Y), b.translated(Y)) == pytest.approx(v, abs=1e-10)


def test_fast_oscillation_raises_with_required_order():
    a = P.PoincareState.at(sigma=0.1)
    b = P.PoincareState.at(x=(500.0, 0, 0), sigma=0.1)
    with pytest.raises(NumericalError, match="requires Gauss-Hermite order"):
        P.overlap(a, b)
    with pytest.raises(ValidationError):
        P.overlap(a, P.PoincareState.at(sigma=0.2))


# ------------------------------------------------------------- kappa, alpha

@pytest.mark.parametrize("sigma", [0.05, 0.1, 0.2])
def test_kappa_matches_derived_series(sigma):
    k = P.kappa(sigma)
    assert k.kappa_num == pytest.approx(kappa_oracle(sigma), rel=1e-13)
    # residual is the sigma^6 term 105/128 sigma^6 minus smaller ones
    assert abs(k.derived_residual) <= 1.0 * sigma**6
    assert k.derived_residual == pytest.approx(105 / 128 * sigma**6, rel=0.2)
    # the printed series misses the sigma^2 coefficient
    assert k.printed_residual == pytest.approx(0.5 * sigma**2, rel=0.1)


def test_kappa_small_width_limit():
    assert P.kappa(1e-4).kappa_num == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99))
def test_kappa_at_least_one(sigma):
    assert P.kappa(sigma).kappa_num >= 1.0


def test_alpha_quadrature_and_limit():
    a = P.alpha(0.1)
    assert a.alpha_num == pytest.approx(alpha_oracle(0.1), abs=1e-10)
    assert 0 < a.alpha_num < 0.5
    prev = None
    for s in (0.4, 0.2, 0.1, 0.05, 0.025):
        gap = abs(P.alpha(s).alpha_num - 0.5)
        if prev is not None:
            assert gap < prev
        prev = gap
    assert P.alpha(0.05).series_derived == pytest.approx(alpha_oracle(0.05), abs=1e-6)
    with pytest.raises(ValidationError):
        P.alpha(1.5)


# --------------------------------------------------------------- momentum

def test_momentum_rest_and_boosted():
    k = P.kappa(0.1).kappa_num
    p = P.momentum_expectation(P.PoincareState.at(sigma=0.1, m=2.0))
    assert p == pytest.approx([2.0 * k, 0, 0, 0], abs=1e-12)
    s = P.PoincareState.at(I=(0.5, 0, 0), sigma=0.1, m=2.0)
    p = P.momentum_expectation(s)
    assert np.linalg.norm(p - 2.0 * k * s.I4) <= 1e-6 * np.linalg.norm(p)
    assert P.mdot(p, p) == pytest.approx((2.0 * k) ** 2, rel=1e-10)


def test_momentum_covariance_rest_frame():
    sigma, m = 0.1, 1.5
    K = P.momentum_covariance(P.PoincareState.at(sigma=sigma, m=m))
    k = P.kappa(sigma).kappa_num
    assert np.diag(K)[1:] == pytest.approx([m * m * sigma**2 / 2] * 3, rel=1e-10)
    assert K[0, 0] == pytest.approx(m * m * (1 + 1.5 * sigma**2 - k * k), rel=1e-6)
    # 3/8 sigma^4 leading term within a sigma^6 budget
    assert abs(K[0, 0] / m**2 - 3 * sigma**4 / 8) <= 1.0 * sigma**6


# --------------------------------------------------------------- geometry

def test_geometry_rest_frame():
    s = P.PoincareState.at(sigma=0.1)
    cmp = P.geometry_compare(s)
    k = P.kappa(0.1).kappa_num
    assert cmp.A[3:] == pytest.approx([k, 0, 0, 0], abs=1e-4)
    for name in ("A_X", "g_II", "g_XX", "Omega_IX", "g_II isotropy"):
        assert cmp.row(name)["verdict"] == "agrees", cmp.row(name)
    assert cmp.row("A_I")["verdict"] in ("agrees", "inconclusive")
    # boost block leads with 1/(2 sigma^2); the printed alpha/(3 sigma^2) is a factor ~6 smaller
    assert cmp.g[0, 0] == pytest.approx(1 / (2 * 0.01) + 0.75, rel=2e-3)
    assert cmp.row("g_II")["printed_abs_error"] > 10
    assert cmp.g[3, 3] == pytest.approx(3 * 0.1**4 / 8, rel=0.03)


def test_geometry_boosted_isotropy_and_connection():
    s = P.PoincareState.at(x=(0.3, 0, 1), t=0.4, I=(0.4, -0.2, 0.3), sigma=0.1, m=1.2)
    cmp = P.geometry_compare(s)
    for name in ("A_X", "g_II", "g_XX", "Omega_IX", "g_II isotropy"):
        assert cmp.row(name)["verdict"] == "agrees", cmp.row(name)


def test_boost_metric_coefficient_series():
    for s in (0.05, 0.1):
        c = P.boost_metric_coefficient(s)
        assert c == pytest.approx(1 / (2 * s * s) + 0.75, abs=5 * s * s)


# ----------------------------------------------------- resolution of unity

def test_resolution_of_unity_reference():
    s0 = P.PoincareState.at(sigma=0.2)
    r = P.resolution_of_unity_check(s0.wavefunction, s0.wavefunction, sigma=0.2, log2_samples=9)
    assert r.rhs == pytest.approx(P.kappa(0.2).kappa_num, rel=1e-10)
    assert r.rel_error < 0.03
    assert abs(r.lhs - r.rhs) < 5 * r.stderr + 1e-3
    assert r.lhs_literal == pytest.approx(r.lhs * (2 * math.pi) ** 3)


def test_resolution_parity_and_linearity():
    s0 = P.PoincareState.at(sigma=0.2)
    odd = lambda xi: xi[:, 1] * s0.wavefunction(xi)
    r = P.resolution_of_unity_check(odd, s0.wavefunction, sigma=0.2, log2_samples=8, replicates=4)
    assert abs(r.lhs) <= 1e-12 + 3 * r.stderr
    base = P.resolution_of_unity_check(s0.wavefunction, s0.wavefunction, sigma=0.2, log2_samples=8, replicates=4)
    dbl = P.resolution_of_unity_check(s0.wavefunction, lambda xi: 2 * s0.wavefunction(xi), sigma=0.2,
                                      log2_samples=8, replicates=4)
    assert dbl.lhs == pytest.approx(2 * base.lhs, rel=1e-12)


def test_resolution_collapse_and_validation():
    s0 = P.PoincareState.at(sigma=0.2)
    with pytest.raises(NumericalError, match="effective sample"):
        P.resolution_of_unity_check(lambda xi: np.zeros(len(xi)), s0.wavefunction, sigma=0.2,
                                    log2_samples=6, replicates=2)
    with pytest.raises(ValidationError):
        P.resolution_of_unity_check(s0.wavefunction, s0.wavefunction, sigma=1.2)


def test_newton_wigner():
    z = P.newton_wigner_expectation(P.PoincareState.at(sigma=0.2), log2_samples=8, replicates=4)
    assert np.allclose(z.x, 0, atol=1e-12 + 3 * z.stderr.max())
    s = P.PoincareState.at(x=(1.0, 0, 0), sigma=0.2)
    r = P.newton_wigner_expectation(s, log2_samples=8, replicates=4)
    assert r.x == pytest.approx([1, 0, 0], abs=0.05)
    a = np.array([0.4, -1.0, 2.0])
    r2 = P.newton_wigner_expectation(s.translated((0.0, *a)), log2_samples=8, replicates=4)
    assert r2.x == pytest.approx(r.x + a, abs=1e-10)
    assert r.norm == pytest.approx(r.kappa, rel=0.03)


# --------------------------------------------------------- covariant scan

def _row(rows, branch, model):
    return next(r for r in rows if r.branch == branch and r.model == model)


def test_scan_minima():
    rows = P.covariant_uncertainty_scan(1.0, 1.0, 1.0, 1.0)
    assert _row(rows, "generic", "printed").minimum == pytest.approx(math.sqrt(2) / 3, abs=1e-6)
    assert _row(rows, "degenerate", "printed").minimum == pytest.approx(3 ** (1 / 3) / 4, abs=1e-6)
    assert _row(rows, "generic", "derived").minimum == pytest.approx(1.0, abs=1e-6)
    assert _row(rows, "degenerate", "derived").minimum == pytest.approx(3 ** (4 / 3) / 2 ** (7 / 3), abs=1e-6)
    for r in rows:
        assert r.minimum == pytest.approx(r.analytic, rel=1e-8)
        assert r.relation == pytest.approx(1 / r.bound)


def test_scan_mass_scaling_of_degenerate_models():
    rows = P.covariant_uncertainty_scan(m=2.0)
    # m^2 on the boost term scales the minimum by m^2, not m^(2/3)
    assert _row(rows, "degenerate", "printed").minimum == pytest.approx(4 * 3 ** (1 / 3) / 4, rel=1e-8)
    assert _row(rows, "degenerate", "printed-consistent").minimum == pytest.approx(
        2 ** (2 / 3) * 3 ** (1 / 3) / 4, rel=1e-8)


@pytest.mark.parametrize("dx,dp", [(1.0, 1.0), (2.0, 0.5), (3.0, 1.0)])
def test_rest_frame_reduction_matches_nonrelativistic(dx, dp):
    m = 1.7
    rows = P.scan_from_displacement((0, 0, 0), (dp / m, 0, 0), (0, 0, dx, 0), m=m)
    nr = un.chain_optimal_reference(un.ProbeDisplacement(dx, dp)).ds2
    assert _row(rows, "generic", "derived").minimum == pytest.approx(nr, rel=1e-6)


def test_displacement_sizes():
    I = (0.6, 0.0, 0.8)
    I4 = P.UnitTimelike(I).array
    assert P.transverse_size(I, 0.3 * I4) == pytest.approx(0.0, abs=1e-12)
    assert P.transverse_size((0, 0, 0), (5.0, 1.0, 2.0, 2.0)) == pytest.approx(3.0)
    d = np.array([0.1, 0.2, -0.1])
    dI4 = np.concatenate([[np.dot(I, d) / I4[0]], d])
    assert P.boost_displacement_size(I, d) == pytest.approx(math.sqrt(-P.mdot(dI4, dI4)), rel=1e-12)


def test_scan_edge_error():
    with pytest.raises(NumericalError, match="edge"):
        P.covariant_uncertainty_scan(sigmas=np.geomspace(0.01, 0.1, 20))
    with pytest.raises(ValidationError):
        P.covariant_uncertainty_scan(dI=0.0)


# ------------------------------------------------------------- causality

def test_causal_predicate():
    o = (0.0, 0.0, 0.0, 0.0)
    assert P.causal_future(o, (1.0, 1.0, 0.0, 0.0))       # null
    assert P.causal_future(o, (2.0, 1.0, 1.0, 0.0))
    assert not P.causal_future(o, (1.0, 1.0, 0.1, 0.0))   # spacelike
    assert not P.causal_future(o, (-2.0, 0.0, 0.0, 0.0))  # past
    assert P.causal_future(o, o)
    # 0.1 + 0.2 is not 0.3 in binary; exact arithmetic sees the float values as they are
    assert not P.causal_future(o, (0.3, 0.1 + 0.2, 0.0, 0.0))
    hist = [P.PoincareState.at(t=t, x=(0.5 * t, 0, 0)) for t in (0.0, 1.0, 2.5)]
    assert P.causally_ordered(hist)
    assert not P.causally_ordered(hist[::-1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.lists(st.floats(-0.9, 0.9), min_size=3, max_size=3))
def test_causal_relation_is_boost_invariant_away_from_the_cone(d, u):
    d = np.array(d)
    interval = P.mdot(d, d)
    if abs(interval) < 1e-6 or abs(d[0]) < 1e-6:
        return
    L = P.boost_matrix(u)
    assert P.causal_future(np.zeros(4), d) == P.causal_future(np.zeros(4), L @ d)
