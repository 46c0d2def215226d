import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasegeom import histories as h
from phasegeom import pullback as pb
from phasegeom.errors import ValidationError
from phasegeom.weyl import WeylFamily

W = WeylFamily(1.0)


def H(points, fam=W, times=None):
    return h.History(fam, points, times)


def test_history_validation():
    with pytest.raises(ValidationError):
        H(np.empty((0, 2)))
    with pytest.raises(ValidationError):
        H([[0, 0], [1, 0]], times=[1.0, 0.0])
    with pytest.raises(ValidationError):
        H([[0, 0, 0]])
    with pytest.raises(ValidationError):
        h.LoopSpec(H([[0, 0], [1, 0]]), H([[0, 0], [2, 0]]))
    with pytest.raises(ValidationError):
        h.LoopSpec(H([[0, 0], [1, 0]]), H([[0, 1], [1, 0]]))


def test_diagonal_is_probability():
    a = H([[0, 0], [0.5, 0.2], [1.0, -0.3]])
    d = h.decoherence(h.LoopSpec(a, a))
    assert abs(d.value.imag) < 1e-15 and 0 <= d.value.real <= 1
    assert abs(d.value.real - h.probability(a).p) < 1e-14


def test_constant_history():
    a = H([[0.3, 0.3]] * 4)
    assert abs(h.decoherence(h.LoopSpec(a, a)).value - 1) < 1e-14
    assert h.probability(H([[1.0, 2.0]])).p == 1.0


def test_three_state_loop():
    z1, z2, z3 = np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    d = h.decoherence(h.LoopSpec(H([z1, z2, z3]), H([z1, z3])))
    oracle = W(z3, z2) * W(z2, z1) * W(z1, z3)
    assert abs(d.value - oracle) < 1e-15
    assert abs(d.phase) > 0.1
    # the triangle has area 1/2 and traversal (0,0)->(0,1)->(1,0) is clockwise
    assert d.phase == pytest.approx(-0.5, abs=1e-12)


def test_probability_metric_ratio_shrinks():
    fam = pb.SpinFamily(1.0)
    ratios = []
    for n in (10, 40, 160):
        t = np.linspace(0.4, 1.4, n + 1)
        pts = np.column_stack([t, 0.7 * t])
        pr = h.probability(H(pts, fam))
        ratios.append(pr.neg_log_p / pr.sum_ds2)
    errs = [abs(r - 1) for r in ratios]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-3


def test_berry_unit_square():
    res = h.berry_limit(W, h.rectangle(0, 0, 1, 1), [100, 1000])
    assert abs(res.phases[-1] - 1) < 1e-3 and abs(res.line_integral - 1) < 1e-12
    assert not res.ambiguous


def test_berry_gauge_invariance():
    fam = pb.GaugedFamily(W, lambda z: 0.3 * z[0])
    a = h.berry_limit(W, h.rectangle(0.2, -0.5, 1, 1), [1000]).phases[0]
    b = h.berry_limit(fam, h.rectangle(0.2, -0.5, 1, 1), [1000]).phases[0]
    assert abs(a - b) < 1e-6


def test_berry_degenerate_loop():
    res = h.berry_limit(W, h.rectangle(0.5, 0.5, 2.0, 0.0), [10, 100])
    assert max(abs(p) for p in res.phases) < 1e-12


def test_berry_converges_on_sphere():
    fam = pb.SpinFamily(0.5)
    res = h.berry_limit(fam, lambda t: np.array([1.0, 2 * np.pi * t]), [8, 64, 512])
    assert res.differences[0] > res.differences[1] > res.differences[2]
    assert res.line_integral == pytest.approx(math.pi * (1 - math.cos(1.0)), abs=1e-10)


def test_berry_flags_large_steps():
    res = h.berry_limit(W, h.rectangle(0, 0, 4, 4), [4, 400])
    assert 4 in res.ambiguous and 400 not in res.ambiguous
    assert res.phases[-1] == pytest.approx(16.0, abs=1e-2)


def test_berry_validation():
    with pytest.raises(ValidationError):
        h.berry_limit(W, h.rectangle(0, 0, 1, 1), [100, 10])
    with pytest.raises(ValidationError):
        h.berry_limit(W, lambda t: np.array([t, 0.0]), [10])


def _straight(n, ds2):
    step = math.sqrt(2 * ds2)
    return H([[k * step, 0.0] for k in range(n + 1)])


def test_zeno_unit_steps():
    rep = h.zeno_report(_straight(10, 1.0))
    assert rep.bound_holds and not rep.below_floor
    assert rep.p <= math.exp(-10) * (1 + 1e-6)
    assert abs(rep.p / math.exp(-10) - 1) < 0.2


def test_zeno_large_steps():
    rep = h.zeno_report(_straight(5, 4.0))
    assert rep.p <= math.exp(-20) * (1 + 1e-9)


def test_zeno_repeated_point_flagged():
    rep = h.zeno_report(H([[0.0, 0.0]] * 3))
    assert rep.p == pytest.approx(1.0, abs=1e-12) and rep.below_floor == [0, 1]
    assert "below Heisenberg floor" in rep.verdict


def test_nonadditivity_weyl():
    r = h.nonadditivity_demo(W, [0, 0], [1, 0], [-1, 0])
    assert r.defect == pytest.approx(2 * math.exp(-1.5), rel=1e-12)
    assert abs(r.defect) > 0.01


def test_nonadditivity_orthogonal():
    r = h.nonadditivity_demo(pb.SpinFamily(0.5), [0.7, 0.3], [0, 0], [math.pi, 0])
    assert abs(r.defect) < 1e-12 and abs(r.p_union - 1) < 1e-12


def test_nonadditivity_with_final_point():
    r = h.nonadditivity_demo(W, [0, 0], [1, 0], [-1, 0], final=[0, 0.5])
    a = W([0, 0.5], [1, 0]) * W([1, 0], [0, 0])
    b = W([0, 0.5], [-1, 0]) * W([-1, 0], [0, 0])
    assert r.defect == pytest.approx(2 * (a.conjugate() * b).real, abs=1e-15)


def test_defect_decays_with_separation():
    ds = [abs(h.nonadditivity_demo(W, [0, 0], [s, 0], [-s, 0]).defect) for s in (1, 2, 4, 8)]
    assert all(x > y for x, y in zip(ds, ds[1:])) and ds[-1] < 1e-20


pts = st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=2, max_size=6)


@settings(max_examples=40, deadline=None)
@given(pts, pts)
def test_hermiticity(a_pts, b_pts):
    b_pts = [a_pts[0]] + b_pts[1:-1] + [a_pts[-1]] if len(b_pts) > 1 else [a_pts[0], a_pts[-1]]
    a, b = H(a_pts), H(b_pts)
    dab = h.decoherence(h.LoopSpec(a, b)).value
    dba = h.decoherence(h.LoopSpec(b, a)).value
    assert abs(dab - dba.conjugate()) <= 1e-14 * max(1.0, abs(dab))


@settings(max_examples=40, deadline=None)
@given(pts)
def test_reversal_conjugates(loop):
    fwd = h.bargmann(W, loop).value
    rev = h.bargmann(W, loop[::-1]).value
    assert abs(fwd - rev.conjugate()) <= 1e-14


@settings(max_examples=40, deadline=None)
@given(pts, st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_appended_projector_lowers_probability(a_pts, extra):
    # a further measurement at a later time multiplies p by a modulus <= 1
    p0 = h.probability(H(a_pts)).p
    p1 = h.probability(H(a_pts + [extra])).p
    assert 0 <= p1 <= p0 * (1 + 1e-12)


def test_inserted_projector_can_raise_probability():
    # an intermediate projector may steer the state: p is not monotone under insertion
    a = [[0.0, 0.0], [4.0, 0.0]]
    assert h.probability(H([a[0], [2.0, 0.0], a[1]])).p > h.probability(H(a)).p
