import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privfilter.compose import approx_gaussian, compose_piecewise
from privfilter.curves import GaussianTradeoff, identity_curve, make_approx_dp, make_pure_delta
from privfilter.errors import DomainError, EnumerationGuardError
from privfilter.order import (CROSSING, DOMINATED, DOMINATES, EQUAL, check_commutativity,
                              check_well_ordered, compare, envelope_tradeoff,
                              envelope_tradeoff_hull, gap_certificate,
                              max_hockey_gap, sup_plds, support, tradeoff_crossing_points)
from privfilter.pld import convolve, eval_hockey, pld_to_hockey, tradeoff_to_pld, validate_pld

from conftest import LN2, LN3, LN4, random_pld, random_tradeoff


def pld(eps, delta):
  return tradeoff_to_pld(make_approx_dp(eps, delta))


def test_basic_relations():
  assert compare(make_approx_dp(LN2, 0), make_approx_dp(LN2, 0)).relation == EQUAL
  assert compare(make_approx_dp(LN3, 0), make_approx_dp(LN2, 0)).relation == DOMINATES
  assert compare(make_approx_dp(LN2, 0), make_approx_dp(LN3, 0)).relation == DOMINATED
  v = compare(make_approx_dp(LN4, 0.01), make_approx_dp(LN2, 0.1))
  assert v.relation == CROSSING
  assert len(v.witnesses) == 2
  assert v.witnesses[0].gap > 0 > v.witnesses[1].gap
  assert v.tradeoff_crossings


def test_crossing_point_location():
  f, g = make_approx_dp(LN4, 0.01), make_approx_dp(LN2, 0.1)
  pts = tradeoff_crossing_points(f, g)
  # Both curves are symmetric, so crossings come in mirrored pairs.
  assert len(pts) == 2
  for a in pts:
    assert f(a) == pytest.approx(g(a), abs=1e-12)
  assert f(pts[0]) == pytest.approx(pts[1], abs=1e-12)


def test_identity_is_least():
  assert compare(identity_curve(), make_approx_dp(0.1, 0.0)).relation == DOMINATED


def test_analytic_compare():
  assert compare(GaussianTradeoff(2.0), GaussianTradeoff(1.0)).relation == DOMINATES
  assert compare(GaussianTradeoff(1.0), GaussianTradeoff(1.0)).relation == EQUAL
  # Large delta against a small-mu Gaussian: they cross.
  assert compare(approx_gaussian(0.1, 0.2), GaussianTradeoff(1.0)).relation == CROSSING


def test_sup_is_least_upper_bound():
  A, B = pld(LN4, 0.01), pld(LN2, 0.1)
  S = sup_plds([A, B])
  assert validate_pld(S) == []
  assert compare(A, S).a_le_b and compare(B, S).a_le_b
  hs = pld_to_hockey(S)
  xs = np.geomspace(0.01, 100, 301)
  want = np.maximum(eval_hockey(pld_to_hockey(A), xs), eval_hockey(pld_to_hockey(B), xs))
  np.testing.assert_allclose(eval_hockey(hs, xs), want, atol=1e-12)


def test_sup_plds_random(rng):
  for _ in range(40):
    fam = [random_pld(rng, int(rng.integers(1, 6))) for _ in range(3)]
    hs = pld_to_hockey(sup_plds(fam))
    xs = np.geomspace(1e-3, 1e3, 97)
    want = np.max([eval_hockey(pld_to_hockey(L), xs) for L in fam], axis=0)
    np.testing.assert_allclose(eval_hockey(hs, xs), want, atol=1e-10)


def test_envelope_routes_agree(rng):
  for _ in range(40):
    fam = [random_tradeoff(rng, 5) for _ in range(3)]
    a = np.linspace(0, 1, 501)
    e1, e2 = envelope_tradeoff(fam), envelope_tradeoff_hull(fam)
    np.testing.assert_allclose(e1(a), e2(a), atol=1e-9)
    assert np.all(e1(a) <= np.min([f(a) for f in fam], axis=0) + 1e-12)


def test_support():
  assert support(pld(LN2, 0.1)) == pytest.approx([0.5, 2.0])


def test_well_ordered_families():
  r = check_well_ordered([make_pure_delta(0.05), make_pure_delta(0.1)], 3)
  assert r.well_ordered
  assert r.degenerate == (0, 1)
  assert check_well_ordered([pld(LN2, 0)], 5).well_ordered


def test_pure_dp_closure_crossings():
  # f_ln2 (x) f_ln2 crosses f_ln3 already at depth 2.
  r = check_well_ordered([pld(LN3, 0), pld(LN2, 0)], 2)
  assert not r.well_ordered
  assert sorted(map(len, r.pair)) == [1, 2]
  # f_ln2 (x) f_ln2 only touches f_ln4; the first crossing is at depth 3.
  assert check_well_ordered([pld(LN4, 0), pld(LN2, 0)], 2).well_ordered
  r3 = check_well_ordered([pld(LN4, 0), pld(LN2, 0)], 3)
  assert not r3.well_ordered
  f3 = compose_piecewise(compose_piecewise(make_approx_dp(LN2, 0), make_approx_dp(LN2, 0)),
                         make_approx_dp(LN2, 0))
  h4, h222 = pld_to_hockey(pld(LN4, 0)), pld_to_hockey(tradeoff_to_pld(f3))
  assert h4(2.0) - h222(2.0) == pytest.approx(0.17777777777777778)
  assert h4(4.0) - h222(4.0) == pytest.approx(-0.14814814814814814)


def test_well_ordered_guard():
  with pytest.raises(EnumerationGuardError):
    check_well_ordered([pld(0.1 * i, 0) for i in range(1, 9)], 12)
  with pytest.raises(DomainError):
    check_well_ordered([], 2)


def test_commutativity():
  r = check_commutativity(pld(LN4, 0.01), [pld(LN4, 0.01), pld(LN2, 0.1)])
  assert not r.commutes
  assert r.hockey.gap == pytest.approx(0.01782, abs=1e-5)
  assert r.tradeoff.gap == pytest.approx(0.01782, abs=1e-4)
  delta = [tradeoff_to_pld(make_pure_delta(d)) for d in (0.05, 0.1)]
  assert check_commutativity(delta[0], delta).commutes


def test_max_hockey_gap_sign():
  w = max_hockey_gap(pld(LN3, 0), pld(LN2, 0))
  assert w.gap > 0 and w.lhs - w.rhs == pytest.approx(w.gap)


def test_gap_certificate():
  A = pld(LN2, 0)
  B1, B2 = pld(LN4, 0.01), pld(LN2, 0.1)
  cert = gap_certificate(A, sup_plds([B1, B2]), B1, B2)
  assert cert is not None and cert.gap > 0
  x = math.exp(cert.eps_star)
  lhs = eval_hockey(pld_to_hockey(convolve(A, sup_plds([B1, B2]))), x)
  rhs = max(eval_hockey(pld_to_hockey(convolve(A, b)), x) for b in (B1, B2))
  assert lhs - rhs == pytest.approx(cert.gap, abs=1e-12)
  with pytest.raises(DomainError):
    gap_certificate(A, B2, B1, B2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_convolution_is_monotone(seed):
  r = np.random.default_rng(seed)
  A, B, C = random_pld(r, 4), random_pld(r, 4), random_pld(r, 3)
  S = sup_plds([A, B])
  assert compare(convolve(A, C), convolve(S, C)).a_le_b


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_compare_is_antisymmetric(seed):
  r = np.random.default_rng(seed)
  A, B = random_pld(r, 5), random_pld(r, 5)
  flip = {DOMINATES: DOMINATED, DOMINATED: DOMINATES, EQUAL: EQUAL, CROSSING: CROSSING}
  assert compare(B, A).relation == flip[compare(A, B).relation]
