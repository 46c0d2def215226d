"""Grids, quadrature rules, finite differences, seeded Brownian bridges.

Every reduction in this module goes through ``math.fsum`` so that sums of
10^5..10^7 terms are correctly rounded and independent of memory layout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError(f"grid needs n >= 2 nodes, got {self.n}")
        if not self.hi > self.lo:
            raise ValidationError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.n)


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in ("gauss-hermite", "gauss-legendre", "tanh-sinh"):
            raise ValidationError(f"unknown quadrature kind {self.kind!r}")
        if len(self.nodes) != len(self.weights):
            raise ValidationError("nodes and weights differ in length")

    def __len__(self):
        return len(self.nodes)


def gauss_hermite(n: int) -> QuadratureRule:
    """Rule for integrals against exp(-x^2) over the real line."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return QuadratureRule("gauss-hermite", x, w)


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return QuadratureRule("gauss-legendre", a + half * (x + 1.0), half * w)


def _tanh_sinh_raw(n: int, tmax: float = 3.5):
    h = tmax / n
    t = h * np.arange(-n, n + 1)
    u = 0.5 * math.pi * np.sinh(t)
    x = np.tanh(u)
    # 1 - x and 1 + x computed without cancellation
    one_minus = np.exp(-u) / np.cosh(u)
    one_plus = np.exp(u) / np.cosh(u)
    w = h * 0.5 * math.pi * np.cosh(t) / np.cosh(u) ** 2
    return x, w, one_minus, one_plus


def tanh_sinh(n: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """Double-exponential rule on [a, b] with 2n+1 nodes."""
    x, w, om, op = _tanh_sinh_raw(n)
    half = 0.5 * (b - a)
    # measure distance from the nearer endpoint so no node rounds onto it
    nodes = np.where(x < 0, a + half * op, b - half * om)
    keep = (w > 0) & (nodes > a) & (nodes < b)
    return QuadratureRule("tanh-sinh", nodes[keep], (half * w)[keep])


def tanh_sinh_halfline(n: int, scale: float = 1.0) -> QuadratureRule:
    """Double-exponential rule on [0, inf) via r = scale (1+x)/(1-x)."""
    x, w, om, op = _tanh_sinh_raw(n)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = scale * op / om
        jac = 2.0 * scale / om**2
        wr = w * jac
    keep = np.isfinite(r) & np.isfinite(wr) & (wr > 0)
    return QuadratureRule("tanh-sinh", r[keep], wr[keep])


def kahan_sum(values) -> complex | float:
    """Correctly rounded sum (``math.fsum``) of real or complex values, in order."""
    v = np.asarray(values).ravel()
    if np.iscomplexobj(v):
        return complex(math.fsum(v.real.tolist()), math.fsum(v.imag.tolist()))
    return math.fsum(v.tolist())


def integrate_1d(f: Callable, rule: QuadratureRule):
    """Sum of w_k f(x_k), compensated, in node order."""
    x = rule.nodes
    try:
        vals = np.asarray(f(x))
        if vals.shape != x.shape:
            raise TypeError
    except TypeError:
        vals = np.array([f(xi) for xi in x])
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.argmax(bad))
        raise NumericalError(f"non-finite integrand {vals[k]!r} at node {k} (x={x[k]!r})")
    return kahan_sum(rule.weights * vals)


def default_step(x: float) -> float:
    return 1e-4 * (1.0 + abs(x))


def fd_derivative(f: Callable, point, direction: int, h: float, order: int = 1):
    """Central finite difference of ``f`` along axis ``direction``.

    ``order`` 1 uses (f(x+h) - f(x-h)) / 2h, order 2 uses the three-point
    second difference; both have O(h^2) truncation error.
    """
    x = np.atleast_1d(np.asarray(point, dtype=float))
    if order not in (1, 2):
        raise ValidationError(f"order must be 1 or 2, got {order}")
    scale = max(1.0, abs(x[direction]))
    if not h > 0 or h < 1e3 * EPS * scale:
        raise ValidationError(f"step too small: h={h!r} at scale {scale!r}")
    e = np.zeros_like(x)
    e[direction] = h
    fp, fm = f(x + e), f(x - e)
    if order == 1:
        return (fp - fm) / (2.0 * h)
    return (fp - 2.0 * f(x) + fm) / h**2


def make_rng(seed: int) -> np.random.Generator:
    if not 0 <= int(seed) < 2**64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def brownian_bridge(z0, z1, steps: int, variance_rate: float, seed=0,
                    duration: float = 1.0, n_paths: int | None = None) -> np.ndarray:
    """Brownian paths pinned at ``z0`` (time 0) and ``z1`` (time ``duration``).

    Each coordinate diffuses independently with variance ``variance_rate`` per
    unit time. Returns shape (steps+1, dim), or (n_paths, steps+1, dim).
    ``seed`` may be an int or an existing ``numpy.random.Generator``.
    """
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    if not variance_rate > 0:
        raise ValidationError("variance_rate must be positive")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    m = 1 if n_paths is None else n_paths
    dt = duration / steps
    frac = (np.arange(steps + 1) / steps)[None, :, None]
    line = z0[None, None, :] + frac * (z1 - z0)[None, None, :]
    if steps == 1:
        paths = np.broadcast_to(line, (m, 2, z0.size)).copy()
    else:
        inc = rng.standard_normal((m, steps, z0.size)) * math.sqrt(variance_rate * dt)
        walk = np.concatenate([np.zeros((m, 1, z0.size)), np.cumsum(inc, axis=1)], axis=1)
        paths = line + walk - frac * walk[:, -1:, :]
        paths[:, 0, :] = z0
        paths[:, -1, :] = z1
    return paths[0] if n_paths is None else paths
