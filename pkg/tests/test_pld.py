import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privfilter.curves import make_approx_dp, validate_tradeoff
from privfilter.errors import InvalidPLDError
from privfilter.pld import (DiscretePLD, check_pld, convolve, dumps, esscher_pair, eval_hockey,
                            hockey_to_pld, identity_pld, make_pld, pld_from_json, pld_to_hockey,
                            pld_to_json, pld_to_tradeoff, randomized_response_pld,
                            tradeoff_from_json, tradeoff_to_hockey, tradeoff_to_json,
                            tradeoff_to_pld, validate_hockey, validate_pld)

from conftest import LN2, random_pld


def assert_same_pld(a: DiscretePLD, b: DiscretePLD, tol=1e-9):
  assert len(a.atoms) == len(b.atoms)
  np.testing.assert_allclose(a.zs, b.zs, atol=tol)
  np.testing.assert_allclose(a.ps, b.ps, atol=tol)
  assert a.inf_mass == pytest.approx(b.inf_mass, abs=tol)


def test_approx_dp_pld():
  L = tradeoff_to_pld(make_approx_dp(LN2, 0.1))
  assert L.zs == pytest.approx([-LN2, LN2])
  assert L.ps == pytest.approx([0.3, 0.6])
  assert L.inf_mass == pytest.approx(0.1)
  assert L.exp_neg_moment == pytest.approx(0.9)
  assert L.deficit == pytest.approx(0.1)


def test_hockey_of_approx_dp():
  h = pld_to_hockey(tradeoff_to_pld(make_approx_dp(LN2, 0.1)))
  assert h(1.0) == pytest.approx(0.1 + 0.9 / 3)
  assert h(2.0) == pytest.approx(0.1)
  assert h(1e-9) == pytest.approx(1.0)
  assert validate_hockey(h) == []


def test_hockey_definition():
  L = make_pld([-0.3, 0.2, 1.5], [0.2, 0.5, 0.25], 0.05)
  xs = np.geomspace(0.05, 20, 57)
  want = [0.05 + sum(p * max(1 - x * math.exp(-z), 0) for z, p in L.atoms) for x in xs]
  np.testing.assert_allclose(eval_hockey(pld_to_hockey(L), xs), want, atol=1e-12)


def test_validity_bound():
  # E[e^-Z] = 0.5 e + 0.5 e^-1 > 1
  bad = DiscretePLD(((-1.0, 0.5), (1.0, 0.5)), 0.0)
  assert "validity" in {v.invariant for v in validate_pld(bad)}
  with pytest.raises(InvalidPLDError):
    check_pld(bad)


def test_make_pld_merges_and_sorts():
  L = make_pld([0.5, -0.5, 0.5 + 1e-14], [0.25, 0.5, 0.25])
  assert L.zs == pytest.approx([-0.5, 0.5])
  assert L.ps == pytest.approx([0.5, 0.5])
  assert make_pld([math.inf, 0.0], [0.1, 0.9]).inf_mass == pytest.approx(0.1)


def test_esscher_pair_labels():
  P, Q = esscher_pair(tradeoff_to_pld(make_approx_dp(LN2, 0.1)))
  assert list(P) == ["0", "1", "inf", "-inf"]
  assert P["inf"] == pytest.approx(0.1) and Q["inf"] == 0
  assert P["-inf"] == 0 and Q["-inf"] == pytest.approx(0.1)
  assert sum(P.values()) == pytest.approx(1) and sum(Q.values()) == pytest.approx(1)


def test_randomized_response():
  L = randomized_response_pld(LN2)
  assert L.ps == pytest.approx([1 / 3, 2 / 3])
  assert L.exp_neg_moment == pytest.approx(1.0)


def test_convolution_law():
  a = tradeoff_to_pld(make_approx_dp(LN2, 0.1))
  c = convolve(a, a)
  assert c.inf_mass == pytest.approx(0.19)
  assert c.zs == pytest.approx([-2 * LN2, 0.0, 2 * LN2])
  assert c.ps == pytest.approx([0.09, 0.36, 0.36])
  np.testing.assert_allclose(convolve(c, identity_pld()).atoms, c.atoms)


def test_pld_to_tradeoff_delta_is_deficit():
  f = pld_to_tradeoff(make_pld([0.0, 1.0], [0.5, 0.5]))
  assert f.delta == pytest.approx(1 - 0.5 - 0.5 / math.e)
  assert validate_tradeoff(f) == []


def test_round_trip_chain(rng):
  for n in range(1, 8):
    L = random_pld(rng, n)
    assert_same_pld(hockey_to_pld(pld_to_hockey(L)), L)
    assert_same_pld(tradeoff_to_pld(pld_to_tradeoff(L)), L)


def test_tradeoff_to_hockey_is_conjugate():
  f = make_approx_dp(0.9, 0.07)
  h = tradeoff_to_hockey(f)
  a = np.union1d(np.linspace(0, 1, 2001), f.breakpoints)
  for x in (0.2, 0.7, 1.0, 2.4, 6.0):
    assert h(x) == pytest.approx(np.max(1 - a - x * f(a)), abs=1e-12)


def test_json_round_trip():
  L = make_pld([-0.3, 0.2], [0.4, 0.55], 0.05)
  text = dumps(pld_to_json(L), indent=2)
  assert_same_pld(pld_from_json(json.loads(text)), L, tol=0)
  f = make_approx_dp(LN2, 0.1)
  g = tradeoff_from_json(json.loads(dumps(tradeoff_to_json(f))))
  assert g.segments == f.segments and g.delta == f.delta


def test_malformed_json():
  with pytest.raises(InvalidPLDError):
    pld_from_json({"atom": []})


def test_dumps_non_finite():
  assert dumps([math.inf, -math.inf]) == '["Infinity", "-Infinity"]'


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**31))
def test_convolution_matches_hockey_identity(n, seed):
  """h_{A+B}(x) = E_{Z~A} h_B(x e^-Z) + m_inf(A)."""
  r = np.random.default_rng(seed)
  A, B = random_pld(r, n), random_pld(r, 3)
  hb = pld_to_hockey(B)
  xs = np.geomspace(0.01, 100, 31)
  want = A.inf_mass + sum(p * eval_hockey(hb, xs * math.exp(-z)) for z, p in A.atoms)
  np.testing.assert_allclose(eval_hockey(pld_to_hockey(convolve(A, B)), xs), want, atol=1e-10)
