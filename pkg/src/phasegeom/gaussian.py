"""One-dimensional Gaussian wave packets in closed form.

A packet is ``psi(x) = exp(i [A (x-q)^2 + p (x-q) + gamma])`` with complex
``A`` (Im A > 0) and complex ``gamma`` carrying phase and normalisation. The
family is closed under free and harmonic evolution, which is what makes the
harmonic-oscillator paths of the package analytic.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class GaussianPacket:
    A: complex
    q: float
    p: float
    gamma: complex = 0j

    def __post_init__(self):
        if not complex(self.A).imag > 0:
            raise ValidationError(f"packet needs Im A > 0, got A={self.A!r}")

    @classmethod
    def normalized(cls, A: complex, q: float, p: float, phase: float = 0.0):
        A = complex(A)
        # |psi|^2 = exp(-2 Im A (x-q)^2 - 2 Im gamma) must integrate to one
        im_gamma = 0.25 * math.log(math.pi / (2.0 * A.imag))
        return cls(A, float(q), float(p), complex(phase, im_gamma))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.q
        return np.exp(1j * (self.A * d * d + self.p * d + self.gamma))

    # second moments; none of them depend on (q, p)
    @property
    def var_x(self) -> float:
        return 1.0 / (4.0 * self.A.imag)

    @property
    def var_p(self) -> float:
        return abs(self.A) ** 2 / self.A.imag

    @property
    def cov_xp(self) -> float:
        """Symmetrised covariance 1/2<xp+px> - <x><p>."""
        return self.A.real / (2.0 * self.A.imag)

    @property
    def norm2(self) -> float:
        return math.sqrt(math.pi / (2.0 * self.A.imag)) * math.exp(-2.0 * self.gamma.imag)


def overlap(a: GaussianPacket, b: GaussianPacket) -> complex:
    """<a|b> = int conj(psi_a) psi_b dx, closed form."""
    Aa, Ab = a.A.conjugate(), b.A
    qa, qb, pa, pb = a.q, b.q, a.p, b.p
    # exponent written as -k x^2 + l x + c
    k = -1j * (Ab - Aa)
    l = 1j * (-2.0 * Ab * qb + 2.0 * Aa * qa + pb - pa)
    c = 1j * (Ab * qb * qb - Aa * qa * qa - pb * qb + pa * qa + b.gamma - a.gamma.conjugate())
    return cmath.sqrt(math.pi / k) * cmath.exp(l * l / (4.0 * k) + c)


def overlap_many(A_a, q_a, p_a, g_a, A_b, q_b, p_b, g_b):
    """Vectorised ``overlap`` over broadcastable parameter arrays."""
    Aa = np.conj(A_a)
    k = -1j * (A_b - Aa)
    l = 1j * (-2.0 * A_b * q_b + 2.0 * Aa * q_a + p_b - p_a)
    c = 1j * (A_b * q_b**2 - Aa * q_a**2 - p_b * q_b + p_a * q_a + g_b - np.conj(g_a))
    return np.sqrt(np.pi / k) * np.exp(l * l / (4.0 * k) + c)
