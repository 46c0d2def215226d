"""Uncertainty chains for coherent-state phase-space resolution.

Each routine returns a report whose ``chain`` lists ``(name, lhs, rhs,
satisfied)`` entries, one per inequality link, so every link can be
asserted on its own. Links that are evaluated but known to fail outside a
restricted regime are still computed and reported, never skipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .dynamics import HamiltonianSpec, generator_moments, to_grid
from .errors import NumericalError, ValidationError
from .weyl import GaussianReference, WeylState, metric_analytic, second_moments

SLACK = 1e-9


@dataclass(frozen=True)
class ProbeDisplacement:
    dq: float
    dp: float
    dt: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dq, self.dp, self.dt)):
            raise ValidationError("displacement must be finite")


@dataclass(frozen=True)
class ChainEntry:
    name: str
    lhs: float
    rhs: float
    satisfied: bool

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def entry(name, lhs, rhs, tol=SLACK) -> ChainEntry:
    lhs, rhs = float(lhs), float(rhs)
    return ChainEntry(name, lhs, rhs, lhs >= rhs - tol * max(1.0, abs(rhs)))


@dataclass
class UncertaintyReport:
    ds2: float
    chain: list
    minimizer: object = None
    extras: dict = field(default_factory=dict)

    def entry(self, name) -> ChainEntry:
        for e in self.chain:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def all_satisfied(self) -> bool:
        return all(e.satisfied for e in self.chain)


def ds2_weyl(ref: GaussianReference, dq: float, dp: float) -> float:
    gqq, gpp, gqp = metric_analytic(ref)
    return gqq * dq * dq + gpp * dp * dp + 2 * gqp * dq * dp


def chain_fixed_reference(ref: GaussianReference, dq_grid) -> UncertaintyReport:
    """Scan ds^2(dq) with |dq dp| = 1 on both sign branches of dp.

    The cross term enters as ``2 g_qp dq dp`` with ``g_qp = -C_pq``, so the two
    branches have minima ``2(Dp Dq -+ C_pq)`` and the global minimum is
    ``2(Dp Dq - |C_pq|)``, which is below one for correlated references.
    """
    dq_grid = np.asarray(dq_grid, float)
    if dq_grid.size < 3 or np.any(dq_grid <= 0):
        raise ValidationError("dq grid needs at least three positive values")
    m = second_moments(ref)
    branches = {}
    for sgn in (+1, -1):
        f = lambda lq, s=sgn: ds2_weyl(ref, math.exp(lq), s * math.exp(-lq))
        vals = np.array([f(math.log(v)) for v in dq_grid])
        k = int(np.argmin(vals))
        lo = math.log(dq_grid[max(k - 1, 0)])
        hi = math.log(dq_grid[min(k + 1, dq_grid.size - 1)])
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        branches[sgn] = (float(res.fun), math.exp(res.x), float(vals.min()))
    # "aligned" branch: the cross term adds |C| (dp sign opposite to g_qp's)
    aligned = -1 if metric_analytic(ref)[2] <= 0 else +1
    a_min, a_dq, _ = branches[aligned]
    g_min = min(branches[+1][0], branches[-1][0])
    g_dq = branches[+1][1] if branches[+1][0] <= branches[-1][0] else branches[-1][1]
    u = m.dq * m.dp
    # u^2 - 1/4 = C^2 + (SR excess); an excess at rounding level would be
    # amplified by the square root, so it is treated as saturation
    excess = m.robertson_det - 0.25
    step = u - math.sqrt(m.cpq**2 + (excess if excess > 1e-12 else 0.0))
    chain = [
        entry("scan >= 2(DpDq - |C|)", g_min, 2 * (u - abs(m.cpq))),
        entry("aligned branch min = 2(DpDq + |C|)", a_min, 2 * (u + abs(m.cpq))),
        entry("2(DpDq + |C|) >= 1", 2 * (u + abs(m.cpq)), 1.0),
        entry("Schroedinger-Robertson", m.robertson_det, 0.25),
        entry("DpDq - sqrt(Dq^2Dp^2 - 1/4) >= 1/2", step, 0.5),
        entry("min ds^2 >= 1", g_min, 1.0),
    ]
    extras = {
        "branch_min": {"+": branches[+1][0], "-": branches[-1][0]},
        "argmin_dq": {"+": branches[+1][1], "-": branches[-1][1]},
        "expected_argmin_dq": math.sqrt(m.dq / m.dp),
        "moments": m,
    }
    return UncertaintyReport(g_min, chain, ProbeDisplacement(g_dq, 1.0 / g_dq), extras)


def heisenberg_sensitivity(ref: GaussianReference, factors=(0.5, 1.0, 2.0)) -> dict:
    """Global minimum of ds^2 under ``dq dp = f`` for each factor ``f``.

    The constraint is read as an equality; the scan shows how the bound moves
    when the order-one constant is halved or doubled (it scales linearly).
    """
    out = {}
    for f in factors:
        if not f > 0:
            raise ValidationError("sensitivity factors must be positive")
        best = math.inf
        for sgn in (+1, -1):
            res = optimize.minimize_scalar(
                lambda lq: ds2_weyl(ref, math.exp(lq), sgn * f * math.exp(-lq)),
                bounds=(-12.0, 12.0), method="bounded", options={"xatol": 1e-12})
            best = min(best, float(res.fun))
        out[float(f)] = best
    return out


@dataclass(frozen=True)
class OptimalReference:
    sigma: float
    dq_ref: float
    value: float
    gradient: float


def chain_optimal_reference(disp: ProbeDisplacement, sigma_range=(0.05, 20.0),
                            chirp_bound: float = 20.0) -> UncertaintyReport:
    """Minimise ds^2 over reference widths on the uncorrelated branch.

    With ``C_pq = 0`` the reference saturates Dq Dp = 1/2 and
    ``ds^2 = dq^2/(4 Dq^2) + Dq^2 dp^2 >= dq dp``, reached at
    ``Dq^2 = dq / (2 dp)``. The infimum over correlated references is
    reported alongside as a diagnostic (it is not bounded below by dq dp).
    """
    dq, dp = abs(disp.dq), abs(disp.dp)
    if dq == 0 or dp == 0:
        raise ValidationError("optimal-reference search needs dq, dp > 0")
    lo, hi = (math.log(s) for s in sigma_range)

    def f(ls):
        return ds2_weyl(GaussianReference(math.exp(ls)), dq, dp)

    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    ls = float(res.x)
    edge = 1e-6 * (hi - lo)
    if not res.success or ls - lo < edge or hi - ls < edge:
        raise NumericalError(f"reference search did not converge inside sigma in {sigma_range}: "
                             f"bracket [{math.exp(lo):.3g}, {math.exp(hi):.3g}], stopped at "
                             f"sigma={math.exp(ls):.6g}, value={res.fun:.6g}")
    h = 1e-5
    grad = (f(ls + h) - f(ls - h)) / (2 * h)
    sigma = math.exp(ls)
    dq_ref = second_moments(GaussianReference(sigma)).dq

    # correlated diagnostic: squeeze along the probe direction
    def fc(v):
        s, c = math.exp(v[0]), v[1]
        return ds2_weyl(GaussianReference(s, c), dq, disp.dp if disp.dp else dp)

    best = optimize.minimize(fc, [ls, 0.0], method="L-BFGS-B",
                             bounds=[(lo, hi), (-chirp_bound, chirp_bound)])
    chain = [
        entry("inf_sigma ds^2 >= dq dp", res.fun, dq * dp),
        entry("inf_sigma ds^2 <= dq dp", dq * dp, res.fun),
        entry("correlated inf ds^2 >= dq dp", best.fun, dq * dp),
    ]
    extras = {
        "expected_dq_ref": math.sqrt(dq / (2 * dp)),
        "correlated_infimum": float(best.fun),
        "correlated_argmin": {"sigma": math.exp(best.x[0]), "chirp": float(best.x[1])},
    }
    return UncertaintyReport(float(res.fun), chain, OptimalReference(sigma, dq_ref, float(res.fun), grad), extras)


@dataclass(frozen=True)
class SRResult:
    dq: float
    dp: float
    cpq: float
    lhs: float
    rhs: float
    slack: float
    saturated: bool


def schrodinger_robertson(state, x=None) -> SRResult:
    """(Dq)^2 (Dp)^2 - C_pq^2 >= 1/4 on a grid wavefunction.

    ``state`` is a ``WeylState``/``GaussianPacket`` or an array of samples on
    ``x``. Momentum moments use spectral derivatives.
    """
    if x is None:
        pk = state.packet() if isinstance(state, WeylState) else state
        g = to_grid(pk)
    else:
        from .dynamics import GridState
        g = GridState(np.asarray(x, float), np.asarray(state, complex))
    n2 = g.norm2()
    if not n2 > 0:
        raise ValidationError("state has zero norm")
    psi = g.psi / math.sqrt(n2)
    xs = g.x * psi
    ps = g.apply_p(psi)
    mx, mp = g.inner(psi, xs).real, g.inner(psi, ps).real
    vx = g.inner(xs, xs).real - mx * mx
    vp = g.inner(ps, ps).real - mp * mp
    cxp = g.inner(xs, ps).real - mx * mp
    lhs = vx * vp - cxp * cxp
    return SRResult(math.sqrt(vx), math.sqrt(vp), cxp, lhs, 0.25, lhs - 0.25, abs(lhs - 0.25) < 1e-9)


@dataclass
class ExtendedChain:
    report: UncertaintyReport
    C2: float
    D2: float
    anticomm: float
    commutator: complex
    dH: float
    dE: float
    #: links conditional on the square-root term vanishing, evaluated for reference
    conditional: dict


def extended_chain(state: WeylState, H: HamiltonianSpec, dz, dt: float,
                   comm_rtol: float = 1e-6) -> ExtendedChain:
    """Time-energy chain for ``C = Delta(Ahat.dz)`` and ``D = -Delta(H) dt``.

    Links evaluated: Robertson for (C, D); the commutator identity
    ``<[C, D]> = -i dH dt`` (raised on failure); the anticommutator bound;
    ``ds_bar^2 >= <C^2> + <D^2> - sqrt(4<C^2><D^2> - dH^2 dt^2)``;
    the quadratic bound obtained by setting the square root to zero;
    ``ds_bar^2 >= dH dt``; and ``ds_bar^2 >= 1`` when ``dE dt = 1``.
    """
    dz = np.asarray(dz, float)
    m = generator_moments(to_grid(state.packet()), H)
    C2 = float(dz @ m.cov_AA @ dz)
    D2 = m.var_H * dt * dt
    CD = -2.0 * float(m.cov_AH @ dz) * dt
    bar = C2 + D2 + CD
    # [C, D] = -dt [Ahat.dz, H] = -dt (dp [x, H] - dq [p, H])
    comm = -dt * (dz[1] * m.comm_xH - dz[0] * m.comm_pH)
    q, p = state.z.q, state.z.p
    eps = 1e-5
    # classical energy difference along dz (central FD of the symbol H(q, p))
    dH = (H.classical(q + eps * dz[0], p + eps * dz[1])
          - H.classical(q - eps * dz[0], p - eps * dz[1])) / (2 * eps)
    target = -1j * dH * dt
    scale = max(abs(target), 1e-300)
    if abs(comm - target) > comm_rtol * scale and abs(comm - target) > 1e-12:
        raise NumericalError(f"commutator identity failed: <[C,D]> = {comm:.12g}, "
                             f"-i dH dt = {target:.12g}")
    k2 = (dH * dt) ** 2
    root = math.sqrt(max(4 * C2 * D2 - k2, 0.0))
    dE = math.sqrt(max(m.var_H, 0.0))
    chain = [
        entry("Robertson(C,D)", C2 * D2 - 0.25 * CD * CD, 0.25 * abs(comm) ** 2),
        entry("|<CD+DC>| <= sqrt(4C2D2 - dH^2dt^2)", root, abs(CD)),
        entry("ds_bar^2 >= C2 + D2 - sqrt(...)", bar, C2 + D2 - root),
        entry("ds_bar^2 >= C2 + dH^2dt^2/(4C2)", bar, C2 + k2 / (4 * C2) if C2 > 0 else (0.0 if k2 == 0 else math.inf)),
        entry("ds_bar^2 >= dH dt", bar, abs(dH * dt)),
    ]
    # the final link imposes dE dt = 1: evaluate at dt' = 1/dE with the same dz
    if dE > 0:
        dt1 = math.copysign(1.0 / dE, dt if dt else 1.0)
        bar1 = C2 + 1.0 - 2.0 * float(m.cov_AH @ dz) * dt1
        chain.append(entry("ds_bar^2 >= 1 at dE dt = 1", bar1, 1.0))
    sens = {}
    if dE > 0:
        for f in (0.5, 1.0, 2.0):
            dtf = math.copysign(f / dE, dt if dt else 1.0)
            sens[f] = C2 + f * f - 2.0 * float(m.cov_AH @ dz) * dtf
    rep = UncertaintyReport(bar, chain, ProbeDisplacement(float(dz[0]), float(dz[1]), dt),
                            {"dE": dE, "dH": dH, "sensitivity": sens})
    # under the vanishing-root premise the last links do follow
    cond = {"premise_residual": 4 * C2 * D2 - k2,
            "C2 + D2 >= |dH dt| (AM-GM)": C2 + D2 - abs(dH * dt)}
    return ExtendedChain(rep, C2, D2, CD, comm, dH, dE, cond)


@dataclass
class ExtendedSurvey:
    configs: list
    failures: dict
    worst: dict
    commutator_rel_error: float
    #: same comparison against the i-less form -dH dt
    commutator_rel_error_literal: float
    #: |ds_bar^2 (moments, C_EA = -Cov) - FD extended metric| and the + sign variant
    metric_mismatch: float
    metric_mismatch_plus: float

    @property
    def all_hold(self) -> bool:
        return not any(self.failures.values())


def extended_chain_survey(n: int = 100, seed: int = 0, tol: float = 1e-8) -> ExtendedSurvey:
    """Evaluate every extended-chain link on ``n`` seeded harmonic-oscillator configurations.

    Draws z ~ U[-2, 2]^2, sigma, omega ~ U[0.5, 2] and dq, dp, dt ~ N(0, 0.1^2).
    A link fails when its slack is below ``-tol``.
    """
    from .dynamics import ExtendedFamily, extended_metric
    from .numerics import make_rng
    from .pullback import metric_fd

    if n < 1:
        raise ValidationError("need at least one configuration")
    rng = make_rng(seed)
    failures, worst, cfgs = {}, {}, []
    crel = crel_lit = mm = mm_plus = 0.0
    for _ in range(n):
        q, p = rng.uniform(-2, 2, 2)
        sigma, omega = rng.uniform(0.5, 2, 2)
        dz = rng.normal(0, 0.1, 2)
        dt = float(rng.normal(0, 0.1))
        H = HamiltonianSpec.harmonic(float(omega))
        st = WeylState.at(float(q), float(p), float(sigma))
        ch = extended_chain(st, H, dz, dt)
        cfgs.append({"q": q, "p": p, "sigma": sigma, "omega": omega, "dq": dz[0], "dp": dz[1], "dt": dt,
                     **{e.name: e.slack for e in ch.report.chain}})
        for e in ch.report.chain:
            s = e.lhs - e.rhs
            failures[e.name] = failures.get(e.name, 0) + int(s < -tol * max(1.0, abs(e.rhs)))
            worst[e.name] = min(worst.get(e.name, math.inf), s)
        target = -1j * ch.dH * dt
        if abs(target) > 0:
            crel = max(crel, abs(ch.commutator - target) / abs(target))
            crel_lit = max(crel_lit, abs(ch.commutator + ch.dH * dt) / abs(target))
        geo = extended_metric(st, H, dz, dt)
        v = np.array([dz[0], dz[1], dt])
        fd = float(v @ metric_fd(ExtendedFamily(sigma, H), np.array([q, p, 0.0])) @ v)
        mm = max(mm, abs(geo.ds2_bar - fd))
        mm_plus = max(mm_plus, abs(geo.ds2_bar - 4 * float(geo.C_EA @ dz) * dt - fd))
    return ExtendedSurvey(cfgs, failures, worst, crel, crel_lit, mm, mm_plus)
