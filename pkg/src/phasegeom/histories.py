"""Decoherence functionals of fine-grained coherent-state histories (H = 0).

A history is an ordered list of chart points whose first entry is the
initial state. For two histories sharing initial and final points,

    d(alpha, beta) = <z_n|z_{n-1}> ... <z_1|z_0> <z_0|z'_1> ... <z'_{m-1}|z'_m>

which is a Bargmann invariant of the closed loop alpha followed by reversed
beta. Phases are accumulated factor by factor so holonomies beyond pi survive.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .pullback import StateFamily, connection_fd, metric_fd

HEISENBERG_FLOOR = 1.0


@dataclass(frozen=True)
class History:
    family: StateFamily
    points: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, float))
        if pts.shape[0] < 1 or pts.size == 0:
            raise ValidationError("a history needs at least one point")
        if pts.shape[1] != self.family.dim:
            raise ValidationError(f"points have dimension {pts.shape[1]}, family chart has {self.family.dim}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("history points must be finite")
        object.__setattr__(self, "points", pts)
        if self.times is not None:
            t = np.asarray(self.times, float)
            if t.shape != (pts.shape[0],):
                raise ValidationError("need one time label per point")
            if np.any(np.diff(t) < 0):
                raise ValidationError("time labels must be nondecreasing")
            object.__setattr__(self, "times", t)

    def __len__(self):
        return self.points.shape[0]

    @property
    def steps(self) -> int:
        return len(self) - 1


@dataclass(frozen=True)
class DecoherenceValue:
    value: complex
    modulus: float
    phase: float

    @classmethod
    def from_factors(cls, factors: Sequence[complex]) -> "DecoherenceValue":
        factors = list(factors)
        val = complex(np.prod(factors)) if factors else 1.0 + 0j
        phase = math.fsum(cmath.phase(f) for f in factors)
        return cls(val, abs(val), phase)


@dataclass(frozen=True)
class LoopSpec:
    forward: History
    backward: History

    def __post_init__(self):
        a, b = self.forward, self.backward
        if a.family is not b.family:
            raise ValidationError("both histories must use the same family")
        if not np.array_equal(a.points[0], b.points[0]):
            raise ValidationError("histories must share the initial point")
        if not np.array_equal(a.points[-1], b.points[-1]):
            raise ValidationError("histories must end on the same point")


def _chain(fam, pts):
    return [fam.overlap(pts[k], pts[k + 1]) for k in range(len(pts) - 1)]


def decoherence(loop: LoopSpec) -> DecoherenceValue:
    """Finite product of overlaps around alpha then reversed beta."""
    fam = loop.forward.family
    a, b = loop.forward.points, loop.backward.points
    # <z_{k+1}|z_k> along alpha, <z'_k|z'_{k+1}> along beta
    fwd = [fam.overlap(a[k + 1], a[k]) for k in range(len(a) - 1)]
    bwd = _chain(fam, b)
    return DecoherenceValue.from_factors(fwd + bwd)


def bargmann(fam: StateFamily, points) -> DecoherenceValue:
    """Closed Bargmann invariant <z_0|z_1><z_1|z_2>...<z_{k-1}|z_0>."""
    pts = np.atleast_2d(np.asarray(points, float))
    cyc = np.vstack([pts, pts[:1]])
    return DecoherenceValue.from_factors(_chain(fam, cyc))


@dataclass(frozen=True)
class ProbabilityReport:
    p: float
    neg_log_p: float
    sum_ds2: float
    ds2: np.ndarray


def step_metric_lengths(alpha: History) -> np.ndarray:
    """delta s_i^2 = d.g.d with the metric taken at each step's midpoint."""
    fam = alpha.family
    pts = alpha.points
    out = np.empty(alpha.steps)
    for k in range(alpha.steps):
        d = pts[k + 1] - pts[k]
        mid = 0.5 * (pts[k + 1] + pts[k])
        geo = fam.geometry(mid)
        g = geo[1] if geo is not None else metric_fd(fam, mid)
        out[k] = float(d @ g @ d)
    return out


def probability(alpha: History) -> ProbabilityReport:
    """p(alpha) = prod |<z_{i+1}|z_i>|^2 together with its metric estimate."""
    fam = alpha.family
    pts = alpha.points
    mods = np.array([abs(fam.overlap(pts[k + 1], pts[k])) for k in range(alpha.steps)])
    with np.errstate(divide="ignore"):
        logs = 2.0 * np.log(mods)
    nlp = -math.fsum(logs.tolist())
    ds2 = step_metric_lengths(alpha)
    return ProbabilityReport(math.exp(-nlp), nlp, math.fsum(ds2.tolist()), ds2)


@dataclass
class BerryLimit:
    refinements: list
    phases: list
    line_integral: float
    differences: list
    #: refinements where some step phase exceeded pi/2 in magnitude
    ambiguous: list = field(default_factory=list)


def _line_integral(fam, curve, n_dense):
    t = (np.arange(n_dense) + 0.5) / n_dense
    zs = np.array([curve(s) for s in np.linspace(0.0, 1.0, n_dense + 1)])
    dz = np.diff(zs, axis=0)
    total = []
    for k, s in enumerate(t):
        zm = np.asarray(curve(s), float)
        geo = fam.geometry(zm)
        A = geo[0] if geo is not None else connection_fd(fam, zm, check=False)
        total.append(float(A @ dz[k]))
    return math.fsum(total)


def berry_limit(fam: StateFamily, curve: Callable, refinements: Sequence[int],
                n_dense: int | None = None) -> BerryLimit:
    """Discrete Bargmann phases of a closed curve against the line integral of A.

    ``curve`` maps [0, 1] into the chart with ``|curve(0)> == |curve(1)>``.
    The Bargmann product is taken in the direction of increasing parameter.
    """
    refinements = [int(n) for n in refinements]
    if any(n < 2 for n in refinements) or any(b <= a for a, b in zip(refinements, refinements[1:])):
        raise ValidationError("refinements must be increasing integers >= 2")
    z0, z1 = np.asarray(curve(0.0), float), np.asarray(curve(1.0), float)
    # closure is judged on the representative, so periodic chart coordinates are fine
    if abs(fam.overlap(z0, z1) - 1.0) > 1e-10:
        raise ValidationError("curve does not close on the same representative")
    n_dense = n_dense or 16 * refinements[-1]
    li = _line_integral(fam, curve, n_dense)
    phases, diffs, amb = [], [], []
    for n in refinements:
        pts = np.array([curve(k / n) for k in range(n)])
        cyc = np.vstack([pts, pts[:1]])
        steps = [cmath.phase(f) for f in _chain(fam, cyc)]
        if max(abs(s) for s in steps) > 0.5 * math.pi:
            amb.append(n)
        ph = math.fsum(steps)
        phases.append(ph)
        diffs.append(abs(ph - li))
    return BerryLimit(refinements, phases, li, diffs, amb)


def rectangle(q0: float, p0: float, a: float, b: float) -> Callable:
    """Counterclockwise rectangle in (q, p), parameterised by arc length on [0, 1]."""
    corners = np.array([[q0, p0], [q0 + a, p0], [q0 + a, p0 + b], [q0, p0 + b], [q0, p0]])
    seg = np.linalg.norm(np.diff(corners, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]

    def curve(t):
        if total == 0:
            return corners[0].copy()
        s = (t % 1.0) * total
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, 3)
        w = (s - cum[k]) / seg[k] if seg[k] > 0 else 0.0
        return corners[k] + w * (corners[k + 1] - corners[k])

    return curve


@dataclass
class ZenoReport:
    p: float
    N: int
    bound: float
    ds2: np.ndarray
    below_floor: list
    #: p <= e^{-N} (1 + tol) whenever no step is below the floor
    bound_holds: bool
    #: the reversed inequality p >= e^{-N}, reported for comparison
    reversed_holds: bool
    verdict: str


def zeno_report(alpha: History, tol: float = 1e-6) -> ZenoReport:
    pr = probability(alpha)
    N = alpha.steps
    bound = math.exp(-N)
    below = [k for k, s in enumerate(pr.ds2) if s < HEISENBERG_FLOOR * (1 - 1e-12)]
    holds = pr.p <= bound * (1 + tol)
    if below:
        verdict = f"{len(below)} step(s) below Heisenberg floor; bound not applicable"
    elif holds:
        verdict = "p <= exp(-N) holds"
    else:
        verdict = "p <= exp(-N) violated"
    return ZenoReport(pr.p, N, bound, pr.ds2, below, holds, pr.p >= bound * (1 - tol), verdict)


@dataclass(frozen=True)
class NonAdditivity:
    p_a: float
    p_b: float
    p_union: float
    defect: float


def nonadditivity_demo(fam: StateFamily, initial, slot_a, slot_b, final=None) -> NonAdditivity:
    """Probabilities for one intermediate slot, coarse-grained as P_a + P_b.

    With no ``final`` point the last time is traced out, so
    p = ||P psi_0||^2 and the defect is 2 Re(<0|a><a|b><b|0>).
    """
    z0, za, zb = (np.asarray(v, float) for v in (initial, slot_a, slot_b))
    if final is None:
        amp_a = fam.overlap(za, z0)
        amp_b = fam.overlap(zb, z0)
        p_a, p_b = abs(amp_a) ** 2, abs(amp_b) ** 2
        cross = (amp_a.conjugate() * fam.overlap(za, zb) * amp_b).real
        p_u = p_a + p_b + 2.0 * cross
    else:
        zf = np.asarray(final, float)
        amp_a = fam.overlap(zf, za) * fam.overlap(za, z0)
        amp_b = fam.overlap(zf, zb) * fam.overlap(zb, z0)
        p_a, p_b = abs(amp_a) ** 2, abs(amp_b) ** 2
        p_u = abs(amp_a + amp_b) ** 2
    return NonAdditivity(p_a, p_b, p_u, p_u - p_a - p_b)
