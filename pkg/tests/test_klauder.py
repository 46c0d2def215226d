import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasegeom import dynamics as dy
from phasegeom import klauder as kl
from phasegeom.errors import NumericalError, ValidationError
from phasegeom.weyl import overlap_uncorrelated

HO = dy.HamiltonianSpec.harmonic(1.0)
FREE = dy.HamiltonianSpec.free()
ZERO = dy.HamiltonianSpec.zero()
Z, ZP = (1.0, 0.0), (0.0, 1.0)


# ------------------------------------------------------------------ oracles

def ho_eigen_sum(z, zp, t, nmax=80):
    """sum_n e^{-i(n+1/2)t} <z|n><n|z'> for sigma = 1, position-phase gauge."""
    a = (z[0] + 1j * z[1]) / math.sqrt(2)
    b = (zp[0] + 1j * zp[1]) / math.sqrt(2)
    pref = np.exp(-0.5j * z[0] * z[1] + 0.5j * zp[0] * zp[1] - abs(a) ** 2 / 2 - abs(b) ** 2 / 2)
    terms = [(np.conj(a) * b) ** n / math.factorial(n) * np.exp(-1j * (n + 0.5) * t) for n in range(nmax)]
    return complex(pref * math.fsum(x.real for x in terms) + 1j * pref * math.fsum(x.imag for x in terms))


def free_momentum_integral(z, zp, t):
    # momentum wavefunction of e^{ipx} psi_0(x - q): pi^{-1/4} e^{-(k-p)^2/2 - i(k-p)q}
    k = np.linspace(-12, 12, 20001)

    def phi(zz):
        q, p = zz
        return math.pi ** -0.25 * np.exp(-(k - p) ** 2 / 2 - 1j * (k - p) * q)

    f = np.conj(phi(z)) * phi(zp) * np.exp(-0.5j * k * k * t)
    return complex(np.trapezoid(f, k))


def heat_damping_ratio(z, zp, nu, t):
    # exact H = 0 value over <z|z'>: (1 + u) exp(-u |d|^2 / 2), u = e^{-2x}/(1 - e^{-2x})
    x = nu * t
    u = math.exp(-2 * x) / -math.expm1(-2 * x)
    d2 = (z[0] - zp[0]) ** 2 + (z[1] - zp[1]) ** 2
    return (1 + u) * math.exp(-u * d2 / 2)


def test_oracles_agree_with_closed_form():
    for t in (0.3, math.pi / 2, 2.0):
        assert kl.exact_propagator(HO, Z, ZP, t) == pytest.approx(ho_eigen_sum(Z, ZP, t), abs=1e-12)
    for t in (0.2, 0.5):
        zz, zzp = (0.3, 0.5), (0.0, 0.5)
        assert kl.exact_propagator(FREE, zz, zzp, t) == pytest.approx(free_momentum_integral(zz, zzp, t), abs=1e-9)
    assert kl.exact_propagator(HO, Z, ZP, 0.0) == pytest.approx(overlap_uncorrelated(Z, ZP))


# ------------------------------------------------------------------ slice kernel

def test_slice_kernel_semigroup():
    nu = 3.0
    g = np.linspace(-9, 10, 241)
    Q, P = np.meshgrid(g, g, indexing="ij")
    W = np.stack([Q, P], -1)
    a, b = np.array([0.7, -0.2]), np.array([-0.4, 0.9])
    w = (g[1] - g[0]) ** 2
    for s, t in ((0.05, 0.1), (0.3, 0.2)):
        comp = w * np.sum(kl.slice_kernel(a, W, nu, s) * kl.slice_kernel(W, b, nu, t))
        assert comp == pytest.approx(complex(kl.slice_kernel(a, b, nu, s + t)), rel=1e-9)


def test_slice_kernel_limits():
    a, b = np.array([0.7, -0.2]), np.array([-0.4, 0.9])
    lim = kl.slice_kernel(a, b, 1.0, 40.0) * 2 * math.pi
    assert complex(lim) == pytest.approx(overlap_uncorrelated(a, b), abs=1e-14)
    # short times: Gaussian with variance 2 nu dt per coordinate
    nu, dt = 2.0, 1e-4
    d2 = float(np.sum((a - b) ** 2)) * 1e-4
    k = kl.slice_kernel(a, a + 1e-2 * (b - a), nu, dt)
    assert abs(complex(k)) == pytest.approx(math.exp(-d2 / (4 * nu * dt)) / (4 * math.pi * nu * dt), rel=1e-3)


def test_ordering_shift_interpolates():
    assert kl.ordering_shift("upper", 3.0) == 0.5
    assert kl.ordering_shift("consistent", 0.0) == pytest.approx(0.5)
    assert kl.ordering_shift("consistent", 50.0) == pytest.approx(0.25)
    with pytest.raises(ValidationError):
        kl.ordering_shift("weyl", 1.0)


# ------------------------------------------------------------------ transfer matrix

def test_zero_time_and_large_nu_reproduce_overlap():
    cfg = kl.LatticeConfig.covering(Z, ZP, 256.0, 0.05, steps=1)
    r = kl.transfer_matrix(cfg, ZERO, Z, ZP)
    assert r.value == pytest.approx(overlap_uncorrelated(Z, ZP), abs=1e-3)
    cfg0 = kl.LatticeConfig.covering(Z, Z, 4.0, 0.0, steps=4)
    r0 = kl.transfer_matrix(cfg0, HO, Z, Z)
    assert r0.rel_error == 0.0


@pytest.mark.parametrize("steps", [1, 4])
def test_zero_hamiltonian_damping(steps):
    z, zp = (1.5, 0.0), (0.0, 1.0)
    exact = overlap_uncorrelated(z, zp)
    prev = 0.0
    for nu in (2.0, 4.0, 8.0, 32.0):
        cfg = kl.LatticeConfig((-9, 10.5), (-8, 9), 72, 72, steps, 0.5, nu)
        v = kl.transfer_matrix(cfg, ZERO, z, zp).value
        ratio = abs(v) / abs(exact)
        assert ratio == pytest.approx(heat_damping_ratio(z, zp, nu, 0.5), rel=1e-8)
        assert ratio < 1.0
        assert ratio > prev
        prev = ratio


def test_lattice_resolution_independence():
    vals = [kl.transfer_matrix(kl.LatticeConfig.covering(Z, ZP, 64.0, math.pi / 2, steps=16, n=n), HO, Z, ZP).value
            for n in (48, 96)]
    assert abs(vals[1] - vals[0]) / abs(vals[1]) < 5e-3


def test_one_step_reduces_norm():
    rng = np.random.default_rng(7)
    cfg0 = kl.LatticeConfig.covering(Z, ZP, 4.0, 0.2, steps=4, n=48)
    f = rng.normal(size=(48, 48)) + 1j * rng.normal(size=(48, 48))
    for nu in (1.0, 4.0, 64.0):
        # one unit of nu dt per slice keeps the kernel wider than two spacings
        cfg = kl.LatticeConfig(cfg0.q_range, cfg0.p_range, 48, 48, 4, 4.0 / nu, nu)
        for H in (ZERO, HO):
            assert kl.one_step_norm_ratio(cfg, H, f) < 1.0


def test_coarse_lattice_rejected():
    cfg = kl.LatticeConfig.covering(Z, ZP, 4.0, math.pi / 2, steps=64, n=32)
    with pytest.raises(NumericalError, match="too coarse"):
        kl.transfer_matrix(cfg, HO, Z, ZP)
    with pytest.raises(ValidationError):
        kl.transfer_matrix(kl.LatticeConfig((-2, 2), (-2, 2), 32, 32, 4, 1.0, 4.0), HO, Z, ZP)
    with pytest.raises(ValidationError):
        kl.LatticeConfig((-2, 2), (-2, 2), 32, 32, 4, 1.0, 0.0)
    with pytest.raises(ValidationError):
        kl.transfer_matrix(kl.LatticeConfig.covering(Z, ZP, 4.0, 1.0), dy.HamiltonianSpec("grid", potential=np.cosh), Z, ZP)


def test_ho_sweep_small_lattice():
    cfgs = [kl.LatticeConfig.covering(Z, ZP, nu, math.pi / 2, steps=32, n=64) for nu in (4, 16, 64, 256)]
    sw = kl.nu_sweep(cfgs, HO, Z, ZP)
    errs = [r.rel_error for r in sw.rows]
    assert sw.monotone and errs[-1] < errs[0]
    assert sw.exact == pytest.approx(ho_eigen_sum(Z, ZP, math.pi / 2), abs=1e-12)
    assert {"nu", "method", "re", "im", "rel_error", "stderr"} <= set(sw.table()[0])


def test_upper_symbol_leaves_zero_point_phase():
    # in the projected regime the anti-normal symbol drifts by t/4
    cfg = kl.LatticeConfig.covering(Z, ZP, 256.0, math.pi / 2, steps=32, n=64)
    up = kl.transfer_matrix(cfg, HO, Z, ZP, symbol="upper")
    co = kl.transfer_matrix(cfg, HO, Z, ZP, symbol="consistent")
    drift = np.angle(up.value / co.value)
    assert drift == pytest.approx(math.pi / 8, rel=0.05)


def test_free_sweep_short_time():
    z, zp = (0.3, 0.5), (0.0, 0.5)
    cfgs = [kl.LatticeConfig.covering(z, zp, nu, 0.5, steps=8, n=64) for nu in (4, 16, 64, 256)]
    sw = kl.nu_sweep(cfgs, FREE, z, zp)
    assert sw.monotone


def test_degenerate_zero_time_row():
    cfgs = [kl.LatticeConfig.covering(Z, Z, nu, 0.0, steps=4, n=48) for nu in (4, 16, 64)]
    sw = kl.nu_sweep(cfgs, HO, Z, Z)
    assert all(r.rel_error < 1e-14 for r in sw.rows) and sw.monotone
    with pytest.raises(ValidationError):
        kl.nu_sweep(cfgs[:2], HO, Z, Z)
    with pytest.raises(ValidationError):
        kl.nu_sweep(cfgs[::-1], HO, Z, Z)


# ------------------------------------------------------------------ Monte Carlo

def test_mc_short_time_identity():
    cfg = kl.LatticeConfig.covering(Z, Z, 256.0, 0.05, steps=8)
    r = kl.mc_estimate(cfg, ZERO, Z, Z, 20000, seed=11)
    assert abs(r.value - 1.0) < 3 * r.stderr + 1e-12


def test_mc_matches_transfer_for_zero_hamiltonian():
    z, zp = (1.5, 0.0), (0.0, 1.0)
    cfg = kl.LatticeConfig((-9, 10.5), (-8, 9), 72, 72, 3, 0.75, 4.0)
    tm = kl.transfer_matrix(cfg, ZERO, z, zp)
    mc = kl.mc_estimate(cfg, ZERO, z, zp, 40000, seed=5)
    assert abs(mc.value - tm.value) < 3 * mc.stderr


def test_mc_stderr_scaling():
    cfg = kl.LatticeConfig.covering(Z, ZP, 1.0, 0.5, steps=8)
    a = kl.mc_estimate(cfg, ZERO, Z, ZP, 20000, seed=3)
    b = kl.mc_estimate(cfg, ZERO, Z, ZP, 40000, seed=4)
    assert a.stderr / b.stderr == pytest.approx(math.sqrt(2), rel=0.2)


def test_mc_guards():
    cfg = kl.LatticeConfig.covering(Z, ZP, 256.0, math.pi / 2, steps=64)
    with pytest.raises(NumericalError, match="oscillatory collapse"):
        kl.mc_estimate(cfg, HO, Z, ZP, 2000, seed=1)
    with pytest.raises(ValidationError):
        kl.mc_estimate(cfg, HO, Z, ZP, 500, seed=1)


def test_mc_is_reproducible():
    cfg = kl.LatticeConfig.covering(Z, ZP, 1.0, 0.5, steps=8)
    a = kl.mc_estimate(cfg, HO, Z, ZP, 2000, seed=9)
    b = kl.mc_estimate(cfg, HO, Z, ZP, 2000, seed=9)
    assert a.value == b.value and a.stderr == b.stderr


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.05, 1.0))
def test_zero_hamiltonian_damping_property(nu, t):
    # any finite nu damps the pinned element when |z - z'|^2 >= 2
    z, zp = (1.0, 1.0), (0.0, 0.0)
    cfg = kl.LatticeConfig.covering(z, zp, nu, t, steps=1)
    v = kl.transfer_matrix(cfg, ZERO, z, zp).value
    assert abs(v) < abs(overlap_uncorrelated(z, zp))
