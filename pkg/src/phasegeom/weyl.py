"""Weyl-group coherent states on the line with a Gaussian reference vector.

``psi_z(x) = exp(i p x) psi_0(x - q)`` with
``psi_0(x) ~ exp(-(1 - i c) x^2 / (2 sigma^2))``. The chirp ``c`` is zero for
the standard reference; a nonzero value gives a position-momentum correlated
reference (``C_pq = c/2``) used for diagnostics.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import gaussian
from .errors import ValidationError
from .pullback import StateFamily

GAUGES = ("position-phase", "symmetric")


@dataclass(frozen=True)
class GaussianReference:
    sigma: float = 1.0
    chirp: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValidationError(f"sigma must be positive and finite, got {self.sigma}")
        if not math.isfinite(self.chirp):
            raise ValidationError("chirp must be finite")

    @classmethod
    def correlated(cls, sigma: float, cpq: float) -> "GaussianReference":
        """Reference with symmetrised covariance ``cpq`` and Var x = sigma^2/2."""
        return cls(sigma, 2.0 * cpq)

    @property
    def A(self) -> complex:
        return complex(self.chirp, 1.0) / (2.0 * self.sigma**2)


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and math.isfinite(self.p)):
            raise ValidationError(f"phase-space point must be finite, got ({self.q}, {self.p})")

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p])


@dataclass(frozen=True)
class WeylState:
    ref: GaussianReference
    z: PhasePoint

    @classmethod
    def at(cls, q: float, p: float, sigma: float = 1.0) -> "WeylState":
        return cls(GaussianReference(sigma), PhasePoint(q, p))

    def packet(self) -> gaussian.GaussianPacket:
        # e^{ipx} psi_0(x-q) = e^{ipq} e^{ip(x-q)} psi_0(x-q)
        q, p = self.z.q, self.z.p
        return gaussian.GaussianPacket.normalized(self.ref.A, q, p, phase=p * q)

    def __call__(self, x):
        return self.packet()(x)


@dataclass(frozen=True)
class SecondMoments:
    dq: float
    dp: float
    cpq: float

    @property
    def robertson_det(self) -> float:
        return self.dq**2 * self.dp**2 - self.cpq**2


def overlap(a: WeylState, b: WeylState) -> complex:
    """<z_a|z_b> in closed form."""
    if a.ref != b.ref:
        raise ValidationError("overlap between states built on different reference vectors")
    return gaussian.overlap(a.packet(), b.packet())


def overlap_uncorrelated(za, zb, sigma: float = 1.0) -> complex:
    """Closed form for the chirp-free reference:
    exp(-dq^2/(4 s^2) - s^2 dp^2/4 + i dp qbar)."""
    dq, dp = zb[0] - za[0], zb[1] - za[1]
    qbar = 0.5 * (za[0] + zb[0])
    return cmath.exp(-dq * dq / (4 * sigma**2) - sigma**2 * dp * dp / 4 + 1j * dp * qbar)


def second_moments(ref: GaussianReference) -> SecondMoments:
    pk = gaussian.GaussianPacket.normalized(ref.A, 0.0, 0.0)
    return SecondMoments(math.sqrt(pk.var_x), math.sqrt(pk.var_p), pk.cov_xp)


def metric_analytic(ref: GaussianReference):
    """(g_qq, g_pp, g_qp) of the pulled-back Fubini-Study metric.

    The label derivatives are generated by ``-(p - <p>)`` along q and by
    ``x`` along p, so the off-diagonal entry is minus the symmetrised
    covariance. It vanishes for the standard reference.
    """
    m = second_moments(ref)
    return m.dp**2, m.dq**2, -m.cpq


def connection_analytic(z: PhasePoint, gauge: str = "position-phase"):
    """(A_q, A_p) for the representative ``e^{ipx} psi_0(x-q)`` or its symmetric rephasing.

    The symmetric gauge multiplies states by ``exp(-i q p / 2)``. Both give
    ``Omega_qp = dA_p/dq - dA_q/dp = +1``.
    """
    if gauge == "position-phase":
        return 0.0, float(z.q)
    if gauge == "symmetric":
        return -0.5 * z.p, 0.5 * z.q
    raise ValidationError(f"unknown gauge {gauge!r}; expected one of {GAUGES}")


class WeylFamily(StateFamily):
    """The Weyl orbit as a two-dimensional ``StateFamily`` on chart (q, p)."""

    dim = 2
    fd_step = 1e-3

    def __init__(self, ref: GaussianReference | float = 1.0, gauge: str = "position-phase"):
        if not isinstance(ref, GaussianReference):
            ref = GaussianReference(float(ref))
        if gauge not in GAUGES:
            raise ValidationError(f"unknown gauge {gauge!r}; expected one of {GAUGES}")
        self.ref = ref
        self.gauge = gauge
        self._A = ref.A
        self._norm = 0.25 * math.log(math.pi / (2.0 * ref.A.imag))

    def _gamma(self, q, p):
        ph = p * q
        if self.gauge == "symmetric":
            ph -= 0.5 * q * p
        return complex(ph, self._norm)

    def overlap(self, za, zb):
        a = gaussian.GaussianPacket(self._A, za[0], za[1], self._gamma(za[0], za[1]))
        b = gaussian.GaussianPacket(self._A, zb[0], zb[1], self._gamma(zb[0], zb[1]))
        return gaussian.overlap(a, b)

    def overlap_batch(self, ZA, ZB):
        ZA, ZB = np.asarray(ZA, float), np.asarray(ZB, float)
        qa, pa, qb, pb = ZA[..., 0], ZA[..., 1], ZB[..., 0], ZB[..., 1]
        shift = 0.5 if self.gauge == "symmetric" else 1.0
        ga = shift * pa * qa + 1j * self._norm
        gb = shift * pb * qb + 1j * self._norm
        return gaussian.overlap_many(self._A, qa, pa, ga, self._A, qb, pb, gb)

    def geometry(self, z):
        gqq, gpp, gqp = metric_analytic(self.ref)
        A = np.array(connection_analytic(PhasePoint(float(z[0]), float(z[1])), self.gauge))
        return A, np.array([[gqq, gqp], [gqp, gpp]]), np.array([[0.0, 1.0], [-1.0, 0.0]])
