"""Extended phase space: coherent states carried along by a Hamiltonian.

The family is ``|z, t> = exp(-i H t) |z>`` with Weyl states ``|z>``. For the
free particle and the harmonic oscillator the evolved state stays Gaussian
and is propagated in closed form; any other potential is handled on a grid
with split-step Fourier propagation.

Because ``<Z_{k+1}|Z_k> = <z_{k+1}| exp(+i H dt) |z_k>``, the histories of
maximal probability follow the Hamiltonian flow *backwards* in the label
chart (q, p). This is the null direction of the extended metric.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import gaussian
from .errors import NumericalError, ValidationError
from .pullback import StateFamily
from .weyl import GaussianReference, PhasePoint, WeylState

KINDS = ("zero", "free", "harmonic", "grid")


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H = p^2/2 + V(x)``; ``V = omega^2 x^2 / 2`` for the oscillator.

    For ``kind='grid'`` the potential is a vectorised callable; ``kind='zero'``
    is the vanishing Hamiltonian (no kinetic term either).
    """

    kind: str = "harmonic"
    omega: float = 1.0
    potential: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown Hamiltonian kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "harmonic" and not self.omega > 0:
            raise ValidationError("harmonic omega must be positive")
        if self.kind == "grid" and self.potential is None:
            raise ValidationError("grid Hamiltonian needs a potential")

    @classmethod
    def harmonic(cls, omega: float = 1.0):
        return cls("harmonic", omega)

    @classmethod
    def free(cls):
        return cls("free", 0.0)

    @classmethod
    def zero(cls):
        return cls("zero", 0.0)

    def V(self, x):
        x = np.asarray(x, float)
        if self.kind == "harmonic":
            return 0.5 * self.omega**2 * x * x
        if self.kind in ("free", "zero"):
            return np.zeros_like(x)
        v = np.asarray(self.potential(x), float)
        if not np.all(np.isfinite(v)):
            raise NumericalError("potential is not finite on the grid")
        return v

    @property
    def kinetic(self) -> float:
        return 0.0 if self.kind == "zero" else 0.5

    def classical(self, q, p):
        return self.kinetic * p * p + float(self.V(np.array([q]))[0])

    @property
    def analytic(self) -> bool:
        return self.kind in ("zero", "free", "harmonic")


@dataclass(frozen=True)
class ExtendedPoint:
    q: float
    p: float
    t: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.q, self.p, self.t)):
            raise ValidationError("extended point must be finite")

    @property
    def z(self) -> np.ndarray:
        return np.array([self.q, self.p])


# ---------------------------------------------------------------- analytic path

def _log_u(u_of, t, omega):
    # continuous branch of log u(t) by sampling the curve from u(0) = 1
    m = 64 + int(64 * abs(omega * t)) + int(8 * abs(t))
    u = u_of(np.linspace(0.0, t, m + 1))
    ang = np.unwrap(np.angle(u))
    return complex(math.log(abs(u[-1])), ang[-1])


def evolve_packet(pk: gaussian.GaussianPacket, H: HamiltonianSpec, t: float) -> gaussian.GaussianPacket:
    """Closed-form ``exp(-i H t)`` on a Gaussian for free or harmonic ``H``."""
    if not H.analytic:
        raise ValidationError("closed-form evolution needs a free or harmonic Hamiltonian")
    if not math.isfinite(t):
        raise ValidationError("time must be finite")
    if t == 0 or H.kind == "zero":
        return pk
    A0, q0, p0 = pk.A, pk.q, pk.p
    if H.kind == "harmonic":
        w = H.omega
        c, s = math.cos(w * t), math.sin(w * t)
        u = c + 2 * A0 / w * s
        du = -w * s + 2 * A0 * c
        logu = _log_u(lambda tau: np.cos(w * tau) + 2 * A0 / w * np.sin(w * tau), t, w)
        q = q0 * c + p0 / w * s
        p = -q0 * w * s + p0 * c
        action = 0.5 * (p * q - p0 * q0)
    else:
        u = 1 + 2 * A0 * t
        du = 2 * A0
        logu = _log_u(lambda tau: 1 + 2 * A0 * tau, t, 0.0)
        q, p = q0 + p0 * t, p0
        action = 0.5 * p0 * p0 * t
    A = du / (2 * u)
    gamma = pk.gamma + 0.5j * logu + action
    return gaussian.GaussianPacket(complex(A), float(q), float(p), complex(gamma))


# ---------------------------------------------------------------- grid path

@dataclass
class GridState:
    """A wavefunction sampled on a uniform periodic grid."""

    x: np.ndarray
    psi: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.x.size, self.dx)

    def inner(self, a, b) -> complex:
        return complex(np.vdot(a, b) * self.dx)

    def norm2(self) -> float:
        return self.inner(self.psi, self.psi).real

    def apply_p(self, f=None):
        f = self.psi if f is None else f
        return np.fft.ifft(self.k * np.fft.fft(f))

    def apply_H(self, H: HamiltonianSpec, f=None):
        f = self.psi if f is None else f
        return np.fft.ifft(H.kinetic * self.k**2 * np.fft.fft(f)) + H.V(self.x) * f


def grid_for(pk: gaussian.GaussianPacket, margin: float = 14.0, extra_x: float = 0.0,
             extra_p: float = 0.0) -> np.ndarray:
    """Periodic grid holding the packet and resolving its momentum content."""
    sx, sp = math.sqrt(pk.var_x), math.sqrt(pk.var_p)
    half = margin * sx + extra_x + 1.0
    pmax = abs(pk.p) + margin * sp + extra_p + 1.0
    n = 2 ** max(8, math.ceil(math.log2(2 * half * pmax / math.pi)) + 1)
    x = pk.q + np.linspace(-half, half, n, endpoint=False)
    return x


def to_grid(pk: gaussian.GaussianPacket, x=None) -> GridState:
    x = grid_for(pk) if x is None else np.asarray(x, float)
    return GridState(x, pk(x))


# fourth-order Yoshida weights for composing Strang steps
_YOSHIDA = (1.0 / (2.0 - 2.0 ** (1 / 3)),) * 2
_YOSHIDA = (_YOSHIDA[0], 1.0 - 2.0 * _YOSHIDA[0], _YOSHIDA[0])


def split_step(state: GridState, H: HamiltonianSpec, t: float, steps: int | None = None) -> GridState:
    """``exp(-i H t)`` by a fourth-order composition of FFT Strang steps.

    Every factor is an exact phase, so the map is unitary for any step; the
    default step count follows the energy scale of the state. Raises
    ``NumericalError`` when a step is too coarse for that scale or when the
    state reaches the grid edge.
    """
    if t == 0:
        return GridState(state.x.copy(), state.psi.copy())
    k = state.k
    V = H.V(state.x) - H.V(state.x).min()
    # energy scale of the occupied part of the spectrum
    n = state.norm2()
    ek = H.kinetic * state.inner(state.apply_p(), state.apply_p()).real / n
    ev = state.inner(state.psi, V * state.psi).real / n
    scale = 1.0 + ek + ev
    if steps is None:
        steps = max(16, math.ceil(100.0 * abs(t) * scale))
    dt = t / steps
    if abs(dt) * scale > 1.0:
        raise NumericalError(f"time step {dt:.3g} too large for energy scale {scale:.3g}")
    props = []
    for w in _YOSHIDA:
        props.append((np.exp(-0.5j * w * dt * V), np.exp(-1j * H.kinetic * w * dt * k**2)))
    psi = state.psi.copy()
    for _ in range(steps):
        for hv, kin in props:
            psi = hv * psi
            psi = np.fft.ifft(kin * np.fft.fft(psi))
            psi = hv * psi
    psi *= np.exp(-1j * t * H.V(state.x).min())
    edge = max(abs(psi[:4]).max(), abs(psi[-4:]).max())
    if edge > 1e-8 * abs(psi).max():
        raise NumericalError("wavefunction reached the grid boundary; enlarge the grid")
    return GridState(state.x.copy(), psi)


@dataclass
class EvolvedState:
    packet: gaussian.GaussianPacket | None
    grid: GridState | None
    t: float

    def on_grid(self, x=None) -> GridState:
        if self.packet is not None:
            return to_grid(self.packet, x)
        if x is not None and not np.array_equal(x, self.grid.x):
            raise ValidationError("grid-evolved state lives on its own grid")
        return self.grid

    @property
    def center(self):
        if self.packet is not None:
            return self.packet.q, self.packet.p
        g = self.grid
        n = g.norm2()
        return (g.inner(g.psi, g.x * g.psi).real / n, g.inner(g.psi, g.apply_p()).real / n)


def evolve(state: WeylState, H: HamiltonianSpec, t: float, method: str = "auto", x=None) -> EvolvedState:
    """``exp(-i H t)|z>``: closed form for free/harmonic H unless ``method='grid'``."""
    if method not in ("auto", "grid"):
        raise ValidationError(f"unknown method {method!r}")
    pk = state.packet()
    if H.analytic and method == "auto" and x is None:
        return EvolvedState(evolve_packet(pk, H, t), None, t)
    if x is None:
        # room for the classical excursion and for spreading
        E = H.classical(pk.q, pk.p) + pk.var_p
        v = math.sqrt(2 * max(E, 0.0))
        sx, sp = math.sqrt(pk.var_x), math.sqrt(pk.var_p)
        if H.kind == "harmonic":
            # bounded orbit; the width breathes between sx and sp/omega
            w = H.omega
            reach = v / w + 14 * max(sp / w - sx, 0.0)
            extra_p = v + 14 * max(w * sx - sp, 0.0)
        else:
            reach = v * (1 + abs(t)) + 14 * sp * abs(t)
            extra_p = v
        x = grid_for(pk, extra_x=reach, extra_p=extra_p)
    return EvolvedState(None, split_step(to_grid(pk, x), H, t), t)


# ---------------------------------------------------------------- moments

@dataclass
class ExtendedGeometry:
    ds2_spatial: float
    C_EA: np.ndarray
    dE2: float
    ds2_bar: float


@dataclass
class GeneratorMoments:
    """Central moments of the generators on a state.

    ``Ahat . dz = x dp - (p - <p>) dq`` (the label derivatives of the Weyl
    family) and the time generator ``-H``.
    """

    cov_AA: np.ndarray
    cov_AH: np.ndarray
    var_H: float
    mean_H: float
    #: <[x, H]>, <[p, H]> (imaginary numbers)
    comm_xH: complex
    comm_pH: complex


def generator_moments(g: GridState, H: HamiltonianSpec) -> GeneratorMoments:
    psi = g.psi
    n2 = g.norm2()
    if abs(n2 - 1) > 1e-8:
        raise NumericalError(f"grid state not normalised (norm^2 = {n2:.12f})")
    xs = g.x * psi
    ps = g.apply_p()
    hs = g.apply_H(H)
    mx, mp, mh = (g.inner(psi, f).real for f in (xs, ps, hs))
    cx, cp, ch = xs - mx * psi, ps - mp * psi, hs - mh * psi
    if not np.all(np.isfinite(hs)):
        raise NumericalError("Hamiltonian moments diverged on the grid")
    # chart components: A_q ~ -(p - <p>), A_p ~ x
    gens = [-cp, cx]
    cov_AA = np.array([[g.inner(a, b).real for b in gens] for a in gens])
    cov_AH = np.array([g.inner(a, ch).real for a in gens])
    var_H = g.inner(ch, ch).real
    comm = lambda u, v: g.inner(u, v) - g.inner(v, u)
    return GeneratorMoments(cov_AA, cov_AH, var_H, mh, comm(cx, ch), comm(cp, ch))


def extended_metric(state: WeylState, H: HamiltonianSpec, dz, dt: float, t: float = 0.0) -> ExtendedGeometry:
    """Components of ``ds_bar^2 = ds^2 + 2 C_EA.dz dt + dE^2 dt^2``.

    ``ds_bar^2`` is the variance of ``Ahat.dz - H dt`` on ``|z, t>``; it does
    not depend on ``t``. With that generator ``C_EA = -Cov(Ahat_i, H)``.
    """
    dz = np.asarray(dz, float)
    # covariances on |z,t> of the conjugated generators equal those on |z>
    m = generator_moments(to_grid(state.packet()), H)
    ds2 = float(dz @ m.cov_AA @ dz)
    C_EA = -m.cov_AH
    bar = ds2 + 2 * float(C_EA @ dz) * dt + m.var_H * dt * dt
    return ExtendedGeometry(ds2, C_EA, m.var_H, bar)


def q_symbol(state: WeylState, H: HamiltonianSpec) -> float:
    """``<z|H|z>`` (closed form for quadratic H, grid otherwise)."""
    pk = state.packet()
    if H.analytic:
        w2 = H.omega**2 if H.kind == "harmonic" else 0.0
        return H.kinetic * (pk.p**2 + pk.var_p) + 0.5 * w2 * (pk.q**2 + pk.var_x)
    g = to_grid(pk)
    return g.inner(g.psi, g.apply_H(H)).real


# ---------------------------------------------------------------- extended family

class ExtendedFamily(StateFamily):
    """``(q, p, t) -> exp(-i H t)|q, p>`` as a three-dimensional family."""

    dim = 3
    fd_step = 1e-3

    def __init__(self, ref: GaussianReference | float, H: HamiltonianSpec):
        if not H.analytic:
            raise ValidationError("the extended family overlap needs a free or harmonic Hamiltonian")
        self.ref = ref if isinstance(ref, GaussianReference) else GaussianReference(float(ref))
        self.H = H

    def _weyl_packet(self, Z):
        return WeylState(self.ref, PhasePoint(float(Z[0]), float(Z[1]))).packet()

    def packet(self, Z):
        return evolve_packet(self._weyl_packet(Z), self.H, float(Z[2]))

    def overlap(self, za, zb):
        # <z_a| e^{iH t_a} e^{-iH t_b} |z_b> = <z_a| e^{-iH (t_b - t_a)} |z_b>
        dt = float(zb[2] - za[2])
        a = self._weyl_packet(za)
        b = evolve_packet(self._weyl_packet(zb), self.H, dt)
        return gaussian.overlap(a, b)


def label_flow(H: HamiltonianSpec, z, dt: float) -> np.ndarray:
    """Classical flow of the label run backwards by ``dt`` (the null direction)."""
    q, p = float(z[0]), float(z[1])
    if H.kind == "harmonic":
        w = H.omega
        c, s = math.cos(w * dt), math.sin(w * dt)
        return np.array([q * c - p / w * s, q * w * s + p * c])
    if H.kind == "free":
        return np.array([q - p * dt, p])
    if H.kind == "zero":
        return np.array([q, p])
    raise ValidationError("label flow is closed-form only for free or harmonic H")


# ---------------------------------------------------------------- action phase

@dataclass
class ActionPhase:
    discrete_phase: float
    action: float
    difference: float
    modulus: float


def _check_branch(points, name):
    t = np.array([P.t for P in points])
    if np.any(np.diff(t) < 0):
        raise ValidationError(f"branch {name} violates the temporal ordering (t must be nondecreasing)")


def _branch_action(fam: ExtendedFamily, pts, n_sub):
    """Integral of A.dz - <H> dt along the piecewise-linear branch."""
    total = []
    for P0, P1 in zip(pts, pts[1:]):
        z0, z1 = np.array([P0.q, P0.p, P0.t]), np.array([P1.q, P1.p, P1.t])
        d = (z1 - z0) / n_sub
        for j in range(n_sub):
            zm = z0 + (j + 0.5) * d
            Aq, Ap = 0.0, zm[0]  # position-phase gauge of the Weyl family
            Ht = q_symbol(WeylState(fam.ref, PhasePoint(zm[0], zm[1])), fam.H)
            total.append(Aq * d[0] + Ap * d[1] - Ht * d[2])
    return math.fsum(total)


def action_phase(alpha: Sequence[ExtendedPoint], beta: Sequence[ExtendedPoint],
                 H: HamiltonianSpec, ref: GaussianReference | float = 1.0,
                 n_sub: int = 200) -> ActionPhase:
    """Phase of d(alpha, beta) against ``S = int_beta Abar - int_alpha Abar``.

    ``Abar = A - <H> dt``; both branches share first and last points and
    must have nondecreasing time labels.
    """
    alpha, beta = list(alpha), list(beta)
    if len(alpha) < 1 or len(beta) < 1:
        raise ValidationError("empty branch")
    _check_branch(alpha, "alpha")
    _check_branch(beta, "beta")
    if alpha[0] != beta[0] or alpha[-1] != beta[-1]:
        raise ValidationError("branches must share initial and final points")
    fam = ExtendedFamily(ref, H)
    Za = [np.array([P.q, P.p, P.t]) for P in alpha]
    Zb = [np.array([P.q, P.p, P.t]) for P in beta]
    factors = [fam.overlap(Za[k + 1], Za[k]) for k in range(len(Za) - 1)]
    factors += [fam.overlap(Zb[k], Zb[k + 1]) for k in range(len(Zb) - 1)]
    phase = math.fsum(cmath.phase(f) for f in factors)
    mod = float(np.prod([abs(f) for f in factors])) if factors else 1.0
    S = _branch_action(fam, beta, n_sub) - _branch_action(fam, alpha, n_sub)
    return ActionPhase(phase, S, abs(phase - S), mod)


# ---------------------------------------------------------------- energy decay

@dataclass
class EnergyDecay:
    neg_log_p: float
    energy_time: float
    dE: np.ndarray
    dt: np.ndarray


def energy_decay_profile(points: Sequence[ExtendedPoint], H: HamiltonianSpec,
                         ref: GaussianReference | float = 1.0) -> EnergyDecay:
    """``-log p`` of an extended history next to ``sum dE_t dt``."""
    pts = list(points)
    _check_branch(pts, "history")
    fam = ExtendedFamily(ref, H)
    Z = [np.array([P.q, P.p, P.t]) for P in pts]
    mods = [abs(fam.overlap(Z[k + 1], Z[k])) for k in range(len(Z) - 1)]
    nlp = -math.fsum(2 * math.log(m) for m in mods) if mods else 0.0
    dE, dts = [], []
    for k in range(len(pts) - 1):
        pk = fam._weyl_packet(Z[k])
        m = generator_moments(to_grid(pk), H)
        dE.append(math.sqrt(max(m.var_H, 0.0)))
        dts.append(pts[k + 1].t - pts[k].t)
    dE, dts = np.array(dE), np.array(dts)
    return EnergyDecay(nlp, math.fsum((dE * dts).tolist()), dE, dts)
