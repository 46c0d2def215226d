"""Connection, metric and curvature pulled back to the chart of a state family.

Everything here is driven by a single function, the overlap
``F(za, zb) = <za|zb>``. With ``iA_i = <z|d_i z>`` and the Fubini-Study
metric ``g_ij = Re<d_i z|d_j z> - A_i A_j`` one has, for small ``d``,

    <z|z+d> = exp(i A(z + d/2).d - 1/2 d.g(z).d) + O(|d|^3)

and ``Omega_ij = d_i A_j - d_j A_i = 2 Im<d_i z|d_j z>``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, ValidationError


class StateFamily:
    """A chart-parameterised family ``z -> |z>`` known through its overlaps.

    Subclasses implement ``overlap`` and may override ``geometry`` to supply
    closed-form ``(A, g, Omega)``.
    """

    dim: int = 0
    #: FD step suited to this family's overlap (analytic vs quadrature-backed)
    fd_step: float = 1e-3

    def overlap(self, za, zb) -> complex:
        raise NotImplementedError

    def geometry(self, z):
        return None

    def __call__(self, za, zb) -> complex:
        return self.overlap(np.asarray(za, float), np.asarray(zb, float))


class GaugedFamily(StateFamily):
    """Same projectors, representatives rephased by ``exp(i theta(z))``.

    The connection shifts by ``grad theta``; metric and curvature do not move.
    """

    def __init__(self, base: StateFamily, theta: Callable, grad_theta: Callable | None = None):
        self.base = base
        self.theta = theta
        self.grad_theta = grad_theta
        self.dim = base.dim
        self.fd_step = base.fd_step

    def overlap(self, za, zb):
        return cmath.exp(1j * (self.theta(zb) - self.theta(za))) * self.base.overlap(za, zb)

    def geometry(self, z):
        geo = self.base.geometry(z)
        if geo is None or self.grad_theta is None:
            return None
        A, g, Om = geo
        return A + np.asarray(self.grad_theta(z), float), g, Om


class ProductFamily(StateFamily):
    """Tensor product of two families on the concatenated chart."""

    def __init__(self, first: StateFamily, second: StateFamily):
        self.first, self.second = first, second
        self.dim = first.dim + second.dim
        self.fd_step = max(first.fd_step, second.fd_step)

    def overlap(self, za, zb):
        n = self.first.dim
        return self.first.overlap(za[:n], zb[:n]) * self.second.overlap(za[n:], zb[n:])

    def geometry(self, z):
        n = self.first.dim
        g1, g2 = self.first.geometry(z[:n]), self.second.geometry(z[n:])
        if g1 is None or g2 is None:
            return None
        A = np.concatenate([g1[0], g2[0]])
        g = np.zeros((self.dim, self.dim))
        Om = np.zeros((self.dim, self.dim))
        g[:n, :n], g[n:, n:] = g1[1], g2[1]
        Om[:n, :n], Om[n:, n:] = g1[2], g2[2]
        return A, g, Om


class SpinFamily(StateFamily):
    """Spin-j coherent states on the sphere, chart (theta, phi).

    Representative ``(cos(theta/2), e^{i phi} sin(theta/2))^{(x) 2j}``, giving
    ``A = j (1 - cos theta) dphi`` and ``g = j/2 (dtheta^2 + sin^2 theta dphi^2)``.
    """

    dim = 2

    def __init__(self, j: float = 0.5):
        if j <= 0 or abs(2 * j - round(2 * j)) > 1e-12:
            raise ValidationError(f"spin must be a positive half-integer, got {j}")
        self.j = j

    def overlap(self, za, zb):
        ta, pa = za
        tb, pb = zb
        base = (math.cos(ta / 2) * math.cos(tb / 2)
                + cmath.exp(1j * (pb - pa)) * math.sin(ta / 2) * math.sin(tb / 2))
        return base ** round(2 * self.j)

    def geometry(self, z):
        t = z[0]
        A = np.array([0.0, self.j * (1.0 - math.cos(t))])
        g = 0.5 * self.j * np.diag([1.0, math.sin(t) ** 2])
        w = self.j * math.sin(t)
        return A, g, np.array([[0.0, w], [-w, 0.0]])


@dataclass
class GeometryReport:
    point: np.ndarray
    A: np.ndarray
    g: np.ndarray
    Omega: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)


def _unit(n, i, h):
    e = np.zeros(n)
    e[i] = h
    return e


def _connection_raw(fam, z, h):
    # differencing log F rather than F removes the O(h^2) error of the
    # modulus factor; near the diagonal the principal branch is safe
    n = fam.dim
    d = np.array([(cmath.log(fam.overlap(z, z + _unit(n, i, h)))
                   - cmath.log(fam.overlap(z, z - _unit(n, i, h)))) / (2 * h)
                  for i in range(n)])
    return d.imag, d.real


def connection_fd(fam: StateFamily, z, h: float | None = None, check: bool = True) -> np.ndarray:
    """``A_i = Im d/de log<z|z + e e_i>`` at ``e = 0`` by central differences.

    Raises ``NumericalError`` when the estimates at ``h`` and ``2h`` disagree by
    more than an O(h^2) truncation error can explain (a non-smooth overlap).
    """
    z = np.asarray(z, float)
    h = fam.fd_step if h is None else h
    A, re = _connection_raw(fam, z, h)
    if check:
        A2, _ = _connection_raw(fam, z, 2 * h)
        spread = np.max(np.abs(A2 - A)) if A.size else 0.0
        if spread > 1e-2 * (1.0 + np.max(np.abs(A))):
            raise NumericalError(f"overlap not smooth at {z}: FD connection moves by {spread:.3g} "
                                 f"between steps {h} and {2 * h}")
    return A


def connection_richardson(fam: StateFamily, z, h: float | None = None) -> np.ndarray:
    """Connection with the O(h^2) term cancelled: (4 A(h/2) - A(h)) / 3."""
    z = np.asarray(z, float)
    h = fam.fd_step if h is None else h
    a1, _ = _connection_raw(fam, z, h)
    a2, _ = _connection_raw(fam, z, h / 2)
    return (4 * a2 - a1) / 3


def tangent_gram_fd(fam: StateFamily, z, h: float | None = None) -> np.ndarray:
    """``<d_i z|d_j z>`` from the four-point cross stencil on both overlap slots."""
    z = np.asarray(z, float)
    h = fam.fd_step if h is None else h
    n = fam.dim
    M = np.empty((n, n), complex)
    for i in range(n):
        ei = _unit(n, i, h)
        for j in range(n):
            ej = _unit(n, j, h)
            M[i, j] = (fam.overlap(z + ei, z + ej) - fam.overlap(z + ei, z - ej)
                       - fam.overlap(z - ei, z + ej) + fam.overlap(z - ei, z - ej)) / (4 * h * h)
    return M


def metric_fd(fam: StateFamily, z, h: float | None = None) -> np.ndarray:
    """Fubini-Study metric ``Re<d_i z|d_j z> - A_i A_j`` from overlap moduli.

    Uses ``log|<z|z+d>| = -1/2 d.g.d + O(|d|^4 - odd terms)`` on a four-point
    cross stencil; odd orders cancel and no connection term has to be
    subtracted, so the result is gauge-blind and does not degrade with |A|.
    """
    z = np.asarray(z, float)
    h = fam.fd_step if h is None else h
    n = fam.dim

    def L(d):
        return math.log(abs(fam.overlap(z, z + d)))

    g = np.empty((n, n))
    for i in range(n):
        ei = _unit(n, i, h)
        for j in range(i, n):
            ej = _unit(n, j, h)
            c = L(ei + ej) - L(ei - ej) - L(ej - ei) + L(-ei - ej)
            g[i, j] = g[j, i] = -c / (4 * h * h)
    return g


def curvature_fd(fam: StateFamily, z, h: float | None = None) -> np.ndarray:
    """``Omega_ij = d_i A_j - d_j A_i`` by nested central differences of A."""
    z = np.asarray(z, float)
    h = fam.fd_step if h is None else h
    n = fam.dim
    dA = np.empty((n, n))
    for i in range(n):
        ei = _unit(n, i, h)
        dA[i] = (connection_fd(fam, z + ei, h, check=False)
                 - connection_fd(fam, z - ei, h, check=False)) / (2 * h)
    return dA - dA.T


def curvature_closedness(fam: StateFamily, z, h: float | None = None) -> float:
    """Largest component of dOmega (cyclic sum of derivatives); zero for any connection."""
    z = np.asarray(z, float)
    h = fam.fd_step if h is None else h
    n = fam.dim
    if n < 3:
        return 0.0
    dOm = np.empty((n, n, n))
    for i in range(n):
        ei = _unit(n, i, h)
        dOm[i] = (curvature_fd(fam, z + ei, h) - curvature_fd(fam, z - ei, h)) / (2 * h)
    cyc = dOm + np.transpose(dOm, (1, 2, 0)) + np.transpose(dOm, (2, 0, 1))
    return float(np.max(np.abs(cyc)))


def geometry_fd(fam: StateFamily, z, h: float | None = None) -> GeometryReport:
    z = np.asarray(z, float)
    h = fam.fd_step if h is None else h
    A, re = _connection_raw(fam, z, h)
    g = metric_fd(fam, z, h)
    Om = curvature_fd(fam, z, h)
    M = tangent_gram_fd(fam, z, h)
    diag = {
        "connection_real_residue": float(np.max(np.abs(re))) if re.size else 0.0,
        # 2 Im<d_i z|d_j z>: independent estimate of the curvature
        "omega_from_gram": M.imag - M.imag.T,
        "min_metric_eigenvalue": float(np.linalg.eigvalsh(g).min()),
    }
    return GeometryReport(z, A, g, Om, "finite-difference", diag)


def geometry(fam: StateFamily, z, h: float | None = None) -> GeometryReport:
    """Analytic geometry when the family provides it, finite differences otherwise."""
    z = np.asarray(z, float)
    geo = fam.geometry(z)
    if geo is None:
        return geometry_fd(fam, z, h)
    A, g, Om = geo
    return GeometryReport(z, np.asarray(A, float), np.asarray(g, float), np.asarray(Om, float), "analytic")


@dataclass
class ExpansionCheck:
    point: np.ndarray
    delta: np.ndarray
    lhs: complex
    rhs: complex
    residual: float


@dataclass
class ExpansionFit:
    checks: list
    slope: float
    #: True when every residual sits at the rounding floor: the quadratic model is exact
    exact: bool
    floor: float


def expansion_check(fam: StateFamily, z, delta, scales: Sequence[float],
                    floor: float = 1e-13) -> ExpansionFit:
    """Compare <z|z+s d> with the midpoint-connection / metric exponential.

    The least-squares slope of log residual against log s is reported over the
    scales whose residual clears ``floor``; the remainder is O(s^3) in general.
    """
    z = np.asarray(z, float)
    delta = np.asarray(delta, float)
    scales = np.asarray(scales, float)
    if np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise ValidationError("scales must be positive and strictly descending")
    analytic = fam.geometry(z) is not None
    g = geometry(fam, z).g if analytic else metric_fd(fam, z)
    checks = []
    for s in scales:
        d = s * delta
        lhs = fam.overlap(z, z + d)
        if not np.any(d):
            checks.append(ExpansionCheck(z, d, lhs, 1.0 + 0j, abs(lhs - 1.0)))
            continue
        zm = z + 0.5 * d
        A_mid = fam.geometry(zm)[0] if analytic else connection_richardson(fam, zm)
        rhs = cmath.exp(1j * float(A_mid @ d) - 0.5 * float(d @ g @ d))
        checks.append(ExpansionCheck(z, d, lhs, rhs, abs(lhs - rhs)))
    res = np.array([c.residual for c in checks])
    use = res > floor
    if use.sum() >= 2:
        slope = float(np.polyfit(np.log(scales[use]), np.log(res[use]), 1)[0])
        exact = False
    else:
        slope, exact = math.inf, True
    return ExpansionFit(checks, slope, exact, floor)
