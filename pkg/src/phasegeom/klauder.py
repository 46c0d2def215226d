"""Wiener-regularised coherent-state path integral at finite diffusion constant.

Paths in the (q, p) plane diffuse with variance ``2 nu`` per unit time in each
coordinate, which is the Gaussian weight ``exp(-(1/2nu) int g zdot zdot)``
for the flat metric ``g = (dq^2 + dp^2)/2`` of the sigma = 1 Weyl family.
The phase is ``exp(-i int A.dz - i int h dt)`` along the path from ``z'`` to
``z`` in the position-phase gauge ``A = (0, q)``.

One time slice of length ``dt`` is integrated exactly: the Brownian weight
with the magnetic phase gives the Landau-level heat kernel

    K(a, b) = exp(nu dt) / (4 pi sinh(nu dt))
              * exp(-coth(nu dt) |a - b|^2 / 4 + i qbar (p_b - p_a))

which tends to ``<a|b> / 2pi`` as ``nu dt -> oo``. The Hamiltonian enters
through a symbol ``h`` evaluated at the slice midpoint; its constant part is
chosen (see ``split_symbol``) so that the ``nu -> oo`` limit is
``<z|exp(-iHt)|z'>`` without a constant phase offset. The overall ``2 pi`` normalisation is fixed
by that same limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gaussian
from .dynamics import HamiltonianSpec, evolve
from .errors import NumericalError, ValidationError
from .numerics import brownian_bridge, make_rng
from .weyl import WeylFamily, WeylState

#: standard width of the sigma = 1 Husimi density per coordinate
HUSIMI_WIDTH = 1.0
COVER_WIDTHS = 8.0


@dataclass(frozen=True)
class LatticeConfig:
    q_range: tuple
    p_range: tuple
    nq: int
    np: int
    steps: int
    t: float
    nu: float

    def __post_init__(self):
        if not self.nu > 0 or not math.isfinite(self.nu):
            raise ValidationError(f"nu must be positive and finite, got {self.nu}")
        if int(self.steps) < 1:
            raise ValidationError("need at least one time step")
        if self.nq < 4 or self.np < 4:
            raise ValidationError("lattice needs at least 4 nodes per axis")
        for lo, hi in (self.q_range, self.p_range):
            if not hi > lo:
                raise ValidationError("lattice ranges must be increasing intervals")
        if not math.isfinite(self.t):
            raise ValidationError("time must be finite")

    @classmethod
    def covering(cls, z, zp, nu, t, steps=64, n=128, widths=COVER_WIDTHS):
        """Square lattice holding both endpoints with ``widths`` Husimi widths to spare."""
        z, zp = np.asarray(z, float), np.asarray(zp, float)
        pad = widths * HUSIMI_WIDTH
        lo = np.minimum(z, zp) - pad
        hi = np.maximum(z, zp) + pad
        return cls((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])), n, n, steps, t, nu)

    @property
    def dtau(self) -> float:
        return self.t / self.steps

    def nodes(self):
        # the integrand is negligible at the box edge, so uniform weights suffice
        q = np.linspace(*self.q_range, self.nq)
        p = np.linspace(*self.p_range, self.np)
        return q, p

    def covers(self, z) -> bool:
        pad = COVER_WIDTHS * HUSIMI_WIDTH
        return (self.q_range[0] <= z[0] - pad + 1e-12 and z[0] + pad <= self.q_range[1] + 1e-12
                and self.p_range[0] <= z[1] - pad + 1e-12 and z[1] + pad <= self.p_range[1] + 1e-12)


@dataclass
class PropagatorEstimate:
    value: complex
    method: str
    nu: float
    exact: complex
    stderr: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def rel_error(self) -> float:
        return abs(self.value - self.exact) / abs(self.exact)


SYMBOLS = ("consistent", "upper")


def ordering_shift(symbol: str, x: float) -> float:
    """Constant subtracted from each quadratic term ``q^2``, ``p^2`` at ``x = nu dt``.

    ``"upper"`` is the anti-normal symbol (shift 1/2), correct in the
    continuum ``x -> 0``. Evaluated at the slice midpoint and projected on
    coherent states, ``q^2`` produces ``x^2 + (1 + exp(-2x))/4``: the pair
    ``q_a q_b`` only reaches the first excited Landau level, which a slice
    damps by ``exp(-2x)``. ``"consistent"`` removes exactly that amount.
    """
    if symbol == "upper":
        return 0.5
    if symbol == "consistent":
        return 0.25 * (1.0 + math.exp(-2.0 * x))
    raise ValidationError(f"unknown symbol {symbol!r}; expected one of {SYMBOLS}")


def split_symbol(H: HamiltonianSpec, symbol: str = "consistent", x: float = 0.0):
    """``(h_q, h_p)`` with ``h(q, p) = h_q(q) + h_p(p)`` for quadratic ``H``."""
    c = ordering_shift(symbol, x)
    if H.kind == "zero":
        return (lambda q: 0.0 * q), (lambda p: 0.0 * p)
    if H.kind == "free":
        k = H.kinetic
        return (lambda q: 0.0 * q), (lambda p: k * (p**2 - c))
    if H.kind == "harmonic":
        w2 = H.omega**2
        k = H.kinetic
        return (lambda q: 0.5 * w2 * (q**2 - c)), (lambda p: k * (p**2 - c))
    raise ValidationError("the path integral needs a free or harmonic Hamiltonian (closed-form symbol)")


def symbol_function(H: HamiltonianSpec, symbol: str = "consistent", x: float = 0.0):
    hq, hp = split_symbol(H, symbol, x)
    return lambda q, p: hq(q) + hp(p)


def exact_propagator(H: HamiltonianSpec, z, zp, t: float) -> complex:
    """``<z|exp(-iHt)|z'>`` for the sigma = 1 family in the position-phase gauge."""
    fam = WeylFamily(1.0)
    if t == 0 or H.kind == "zero":
        return fam.overlap(np.asarray(z, float), np.asarray(zp, float))
    ev = evolve(WeylState.at(float(zp[0]), float(zp[1])), H, t)
    bra = WeylState.at(float(z[0]), float(z[1])).packet()
    return gaussian.overlap(bra, ev.packet)


def _slice_consts(x):
    # exp(x)/(4 pi sinh x) and coth x, stable for large x
    e = math.exp(-2.0 * x)
    return 1.0 / (2.0 * math.pi * (-math.expm1(-2.0 * x))), (1.0 + e) / (-math.expm1(-2.0 * x))


def slice_kernel(a, b, nu: float, dtau: float, h=None) -> np.ndarray:
    """One-slice kernel ``K(a, b)`` with ``a`` the later point (broadcasting)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    c, cth = _slice_consts(nu * dtau)
    dq, dp = a[..., 0] - b[..., 0], a[..., 1] - b[..., 1]
    qbar, pbar = 0.5 * (a[..., 0] + b[..., 0]), 0.5 * (a[..., 1] + b[..., 1])
    phase = -qbar * dp
    if h is not None:
        phase = phase - dtau * h(qbar, pbar)
    return c * np.exp(-0.25 * cth * (dq * dq + dp * dp) + 1j * phase)


def _kernel_width(nu, dtau):
    # standard deviation per coordinate of the slice Gaussian
    return math.sqrt(2.0 * math.tanh(nu * dtau))


class _Transfer:
    """Applies one slice on the lattice: K = Q(q_a,q_b) x P_{q_a}(p_a,p_b)."""

    def __init__(self, cfg: LatticeConfig, h_q, h_p):
        q, p = cfg.nodes()
        self.q, self.p = q, p
        dq, dp = q[1] - q[0], p[1] - p[0]
        self.w = dq * dp
        x = cfg.nu * cfg.dtau
        c, cth = _slice_consts(x)
        dt = cfg.dtau
        s = _kernel_width(cfg.nu, dt)
        if s < 2.0 * max(dq, dp):
            raise NumericalError(f"lattice too coarse: slice kernel width {s:.3g} is below two "
                                 f"spacings ({dq:.3g}, {dp:.3g}); refine or lengthen the time step")
        qa, qb = q[:, None], q[None, :]
        # q part, including the position half of the midpoint symbol
        self.Q = c * self.w * np.exp(-0.25 * cth * (qa - qb) ** 2 - 1j * dt * h_q(0.5 * (qa + qb)))
        pa, pb = p[:, None], p[None, :]
        P = np.exp(-0.25 * cth * (pa - pb) ** 2 - 1j * dt * h_p(0.5 * (pa + pb)))
        # magnetic phase -qbar (p_a - p_b) = -(q_a + q_b)(p_a - p_b)/2; the q_a part
        # is folded into a per-row matrix, the q_b part acts on the input
        self.R = P[None, :, :] * np.exp(-0.5j * q[:, None, None] * (pa - pb)[None, :, :])
        self.in_phase = np.exp(0.5j * q[:, None] * p[None, :])     # e^{+i q_b p_b / 2}
        self.out_phase = np.exp(-0.5j * q[:, None] * p[None, :])   # e^{-i q_b p_a / 2}

    def apply(self, f):
        F = f * self.in_phase
        # Y[a, b, pa] = sum_pb R[a, pa, pb] F[b, pb]
        Y = np.matmul(F[None, :, :], np.transpose(self.R, (0, 2, 1)))
        Y *= self.out_phase[None, :, :]
        return np.einsum("ab,abp->ap", self.Q, Y)


def transfer_matrix(cfg: LatticeConfig, H: HamiltonianSpec, z, zp,
                    symbol: str = "consistent") -> PropagatorEstimate:
    """Iterate the exact slice kernel on the lattice and pin the endpoints.

    The first slice starts at ``z'`` and the last one ends at ``z``, so only
    the ``N - 1`` intermediate times are integrated on the lattice.
    """
    z, zp = np.asarray(z, float), np.asarray(zp, float)
    x = cfg.nu * cfg.dtau
    hq, hp = split_symbol(H, symbol, x)
    h = symbol_function(H, symbol, x)
    if not (cfg.covers(z) and cfg.covers(zp)):
        raise ValidationError(f"lattice must cover both endpoints by {COVER_WIDTHS:g} Husimi widths")
    exact = exact_propagator(H, z, zp, cfg.t)
    if cfg.t == 0:
        return PropagatorEstimate(complex(exact), "transfer-matrix", cfg.nu, exact)
    if cfg.steps == 1:
        val = 2 * math.pi * complex(slice_kernel(z, zp, cfg.nu, cfg.dtau, h))
        return PropagatorEstimate(val, "transfer-matrix", cfg.nu, exact)
    T = _Transfer(cfg, hq, hp)
    Qg, Pg = np.meshgrid(T.q, T.p, indexing="ij")
    grid = np.stack([Qg, Pg], axis=-1)
    f = slice_kernel(grid, zp, cfg.nu, cfg.dtau, h)
    for _ in range(cfg.steps - 2):
        f = T.apply(f)
    last = slice_kernel(z, grid, cfg.nu, cfg.dtau, h)
    val = 2 * math.pi * T.w * complex(np.sum(last * f))
    return PropagatorEstimate(val, "transfer-matrix", cfg.nu, exact,
                              diagnostics={"kernel_width": _kernel_width(cfg.nu, cfg.dtau),
                                           "spacing": (T.q[1] - T.q[0], T.p[1] - T.p[0])})


def one_step_norm_ratio(cfg: LatticeConfig, H: HamiltonianSpec, f, symbol: str = "consistent") -> float:
    """``||K f|| / ||f||`` for a lattice function under one slice (L^2 on the box)."""
    T = _Transfer(cfg, *split_symbol(H, symbol, cfg.nu * cfg.dtau))
    f = np.asarray(f, complex)
    g = T.apply(f)
    return math.sqrt(float(np.sum(abs(g) ** 2)) / float(np.sum(abs(f) ** 2)))


def mc_estimate(cfg: LatticeConfig, H: HamiltonianSpec, z, zp, samples: int, seed: int = 0,
                batches: int = 100, symbol: str = "consistent") -> PropagatorEstimate:
    """Average the slice phases over pinned Gaussian bridges.

    Each step has variance ``2 tanh(nu dt)`` per coordinate, the Gaussian
    factor of the exact slice kernel, so the estimator targets the same
    discrete integral as ``transfer_matrix``. The standard error comes from
    batch means. The effective sample size ``M |<e^{i phi}>|^2`` measures
    phase cancellation; below 10 the estimate is rejected.
    """
    if samples < 1000:
        raise ValidationError("need at least 10^3 samples")
    if samples % batches:
        raise ValidationError("samples must split evenly into batches")
    z, zp = np.asarray(z, float), np.asarray(zp, float)
    h = symbol_function(H, symbol, cfg.nu * cfg.dtau)
    exact = exact_propagator(H, z, zp, cfg.t)
    if cfg.t == 0:
        return PropagatorEstimate(complex(exact), "monte-carlo", cfg.nu, exact)
    n, dt = cfg.steps, cfg.dtau
    x = cfg.nu * dt
    s2 = 2.0 * math.tanh(x)
    rng = make_rng(seed)
    per = samples // batches
    bm = np.empty(batches, complex)
    for k in range(batches):
        # batches are drawn in order from one stream, so results are reproducible
        paths = brownian_bridge(zp, z, n, s2 / dt, seed=rng, duration=cfg.t, n_paths=per)
        q, p = paths[..., 0], paths[..., 1]
        qbar = 0.5 * (q[:, 1:] + q[:, :-1])
        pbar = 0.5 * (p[:, 1:] + p[:, :-1])
        phi = -np.sum(qbar * np.diff(p, axis=1), axis=1) - dt * np.sum(h(qbar, pbar), axis=1)
        bm[k] = np.exp(1j * phi).mean()
    mean = complex(bm.mean())
    ess = samples * abs(mean) ** 2
    if ess < 10:
        raise NumericalError(f"oscillatory collapse: effective sample size {ess:.3g} < 10 "
                             f"(|<e^(i phi)>| = {abs(mean):.3g}, nu = {cfg.nu:g})")
    se = math.sqrt((bm.real.var(ddof=1) + bm.imag.var(ddof=1)) / batches)
    # 2 pi (2/(1 + e^{-2x}))^N times the Gaussian chain density at z - z'
    d2 = float(np.sum((z - zp) ** 2))
    log_pref = (math.log(2 * math.pi) + n * (math.log(2.0) - math.log1p(math.exp(-2 * x)))
                - math.log(2 * math.pi * n * s2) - d2 / (2 * n * s2))
    pref = math.exp(log_pref)
    return PropagatorEstimate(pref * mean, "monte-carlo", cfg.nu, exact, pref * se,
                              {"ess": ess, "samples": samples, "mean_phase": mean})


@dataclass
class NuSweep:
    rows: list
    monotone: bool
    extrapolated: complex
    exact: complex

    def table(self):
        return [{"nu": r.nu, "method": r.method, "re": r.value.real, "im": r.value.imag,
                 "rel_error": r.rel_error, "stderr": r.stderr} for r in self.rows]


def nu_sweep(cfgs, H: HamiltonianSpec, z, zp, symbol: str = "consistent") -> NuSweep:
    """Transfer-matrix values for ascending ``nu`` with a ``1/nu`` extrapolation."""
    cfgs = list(cfgs)
    if len(cfgs) < 3:
        raise ValidationError("a sweep needs at least three nu values")
    nus = [c.nu for c in cfgs]
    if any(b <= a for a, b in zip(nus, nus[1:])):
        raise ValidationError("nu values must be strictly ascending")
    rows = [transfer_matrix(c, H, z, zp, symbol) for c in cfgs]
    errs = [r.rel_error for r in rows]
    tiny = 1e-12
    monotone = all(b < a or (a < tiny and b < tiny) for a, b in zip(errs, errs[1:]))
    # least squares in 1/nu over the two largest nu
    x = np.array([1.0 / r.nu for r in rows[-2:]])
    y = np.array([r.value for r in rows[-2:]])
    lim = complex(y[1] - (y[1] - y[0]) * x[1] / (x[1] - x[0])) if x[1] != x[0] else complex(y[1])
    return NuSweep(rows, monotone, lim, rows[0].exact)
