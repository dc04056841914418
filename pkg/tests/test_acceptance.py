"""Acceptance suite: one test per criterion, each at its stated tolerance and time limit.

Every test records a PASS/FAIL line; the lines are printed together at the end of
the pytest run (see ``conftest.pytest_terminal_summary``).
"""

import contextlib
import json
import math
import time

import numpy as np

from privfilter.cli import main
from privfilter.compose import GaussianComposed, compose_piecewise, compose_pld_check, eval_analytic_tradeoff
from privfilter.curves import GaussianTradeoff, eval_gaussian, make_approx_dp, make_pure_delta
from privfilter.filter import (build_crossing_counterexample, crossing_budget, fdp_filter_step,
                               is_free, new_filter)
from privfilter.oracle import np_compose_oracle, sup_distance
from privfilter.order import check_commutativity, check_well_ordered, gap_certificate, sup_plds
from privfilter.pld import (hockey_to_pld, pld_to_hockey, pld_to_tradeoff, tradeoff_to_hockey,
                            tradeoff_to_pld)

from conftest import LN2, LN4, random_pld, random_tradeoff

RESULTS = {}


@contextlib.contextmanager
def criterion(n, title, limit):
  """Times the body, records a PASS/FAIL line and enforces the time limit."""
  detail = {}
  t0 = time.perf_counter()
  try:
    yield detail
    elapsed = time.perf_counter() - t0
    assert elapsed < limit, f"took {elapsed:.2f}s, limit {limit}s"
  except BaseException as exc:
    elapsed = time.perf_counter() - t0
    RESULTS[n] = f"FAIL criterion {n:2d}: {title} ({elapsed:.2f}s) {str(exc).splitlines()[0]}"
    raise
  note = " ".join(f"{k}={v}" for k, v in detail.items())
  RESULTS[n] = f"PASS criterion {n:2d}: {title} ({elapsed:.2f}s) {note}".rstrip()


def pld(eps, delta):
  return tradeoff_to_pld(make_approx_dp(eps, delta))


def test_criterion_01_oracle_equivalence():
  pairs = [((LN2, 0.0), (LN2, 0.0)), ((LN2, 0.1), (LN2, 0.1)), ((LN4, 0.01), (LN2, 0.1))]
  with criterion(1, "exact composition vs brute-force oracle at grid 600", 30) as d:
    worst = 0.0
    for a, b in pairs:
      f, g = make_approx_dp(*a), make_approx_dp(*b)
      worst = max(worst, sup_distance(compose_piecewise(f, g), np_compose_oracle(f, g, 600)))
    d["sup_norm"] = f"{worst:.3g}"
    assert worst <= 2e-3


def test_criterion_02_route_equivalence():
  rng = np.random.default_rng(2)
  a = np.linspace(0, 1, 1001)
  with criterion(2, "segment table vs PLD convolution on 500 random pairs", 10) as d:
    worst = 0.0
    for _ in range(500):
      f, g = random_tradeoff(rng, 6), random_tradeoff(rng, 6)
      assert len(f.segments) <= 6 and len(g.segments) <= 6
      worst = max(worst, float(np.max(np.abs(compose_piecewise(f, g)(a)
                                                - compose_pld_check(f, g)(a)))))
    d["max_dev"] = f"{worst:.3g}"
    assert worst <= 1e-9


def test_criterion_03_conjugacy_roundtrips():
  rng = np.random.default_rng(3)
  xs = np.geomspace(1e-3, 1e3, 61)
  with criterion(3, "pld/hockey/tradeoff round trips on 1000 random PLDs", 5) as d:
    worst = 0.0
    for _ in range(1000):
      L = random_pld(rng, int(rng.integers(1, 11)))
      assert len(L.atoms) <= 10
      f = pld_to_tradeoff(L)
      for back in (hockey_to_pld(pld_to_hockey(L)), tradeoff_to_pld(f),
                   hockey_to_pld(tradeoff_to_hockey(f))):
        assert len(back.atoms) == len(L.atoms)
        dev = abs(back.inf_mass - L.inf_mass)
        if L.atoms:
          dev = max(dev, np.max(np.abs(back.zs - L.zs)), np.max(np.abs(back.ps - L.ps)))
        worst = max(worst, float(dev))
      h1, h2 = pld_to_hockey(L), tradeoff_to_hockey(f)
      worst = max(worst, float(np.max(np.abs(h1(xs) - h2(xs)))))
    d["max_dev"] = f"{worst:.3g}"
    assert worst <= 1e-9


def test_criterion_04_gaussian_composition():
  a = np.linspace(0, 1, 200)
  with criterion(4, "numeric G_1 (x) G_1 vs closed-form G_sqrt2", 5) as d:
    numeric = eval_analytic_tradeoff(GaussianComposed(1.0, GaussianTradeoff(1.0)), a)
    dev = float(np.max(np.abs(numeric - eval_gaussian(GaussianTradeoff(math.sqrt(2)), a))))
    d["max_dev"] = f"{dev:.3g}"
    assert dev <= 1e-5


def test_criterion_05_counterexample_values():
  with criterion(5, "crossing counter-example (ln4, 0.01, ln2, 0.1)", 1) as d:
    ce = build_crossing_counterexample(LN4, 0.01, LN2, 0.1)
    d.update(case=ce.case, rhs_slope=f"{ce.rhs_first_slope:.4f}",
             lhs_slope=f"{ce.lhs_first_slope:.4f}", gap=f"{ce.max_gap:.5f}",
             at=f"{ce.gap_location:.6f}")
    assert ce.case == 1
    assert abs(ce.rhs_first_slope - (-13.7273)) <= 1e-3
    assert abs(ce.lhs_first_slope - (-14.1818)) <= 1e-3
    assert abs(ce.max_gap - 0.01782) <= 1e-4
    assert abs(ce.gap_location - 0.039204) <= 1e-6


def test_criterion_06_filter_not_free():
  with criterion(6, "corollary budget: not free, every step accepted", 5) as d:
    g1, g2, budget = crossing_budget(LN4, 0.01, LN2, 0.1)
    eps = math.log(-budget.segments[0][1])
    assert abs(eps - 2.61938) < 1e-4 and abs(budget.delta - 0.109) < 1e-12
    v = is_free([tradeoff_to_pld(g) for g in (g1, g2, make_approx_dp(0, 0))],
                tradeoff_to_pld(budget), 2)
    assert not v.free
    assert v.witness.gap >= 1e-4
    for second in (g1, g2):
      s = new_filter(tradeoff_to_pld(budget), 2)
      s, ok1 = fdp_filter_step(s, g1)
      s, ok2 = fdp_filter_step(s, second)
      assert ok1 and ok2
    d.update(eps=f"{eps:.5f}", witness_gap=f"{v.witness.gap:.5f}")


def test_criterion_07_free_families():
  with criterion(7, "pure-delta family and single-query chains are free", 10) as d:
    fam = [tradeoff_to_pld(make_pure_delta(x)) for x in (0.05, 0.1)]
    ident = tradeoff_to_pld(make_approx_dp(0, 0))
    assert is_free(fam + [ident], tradeoff_to_pld(make_pure_delta(0.3)), 4).free
    assert check_commutativity(fam[0], fam + [ident]).commutes
    chains = 0
    for q in (pld(LN2, 0.0), pld(0.5, 0.05), tradeoff_to_pld(make_pure_delta(0.1))):
      assert check_commutativity(q, [q, ident]).commutes
      for budget in (pld(3 * LN2, 0.0), pld(1.7, 0.3), tradeoff_to_pld(make_pure_delta(0.25))):
        for k in range(1, 6):
          assert is_free([q, ident], budget, k).free
          chains += 1
    d["chains"] = chains


def test_criterion_08_well_ordering_detector():
  with criterion(8, "{f_ln4, f_ln2} not well-ordered at depth 2; pure-delta well-ordered", 10) as d:
    r = check_well_ordered([pld(LN4, 0.0), pld(LN2, 0.0)], 2)
    d["pure_dp_depth2"] = "well-ordered" if r.well_ordered else "not-well-ordered"
    delta = check_well_ordered([make_pure_delta(0.05), make_pure_delta(0.1)], 3)
    assert delta.well_ordered
    assert not r.well_ordered, (
        "{f_ln4, f_ln2} is well-ordered at depth 2: f_ln2 (x) f_ln2 touches f_ln4 without "
        "crossing (first crossing at depth 3)")


def test_criterion_09_gap_certificate():
  with criterion(9, "gap amplification certificate with A = pld(f_ln2)", 2) as d:
    B1, B2 = pld(LN4, 0.01), pld(LN2, 0.1)
    cert = gap_certificate(pld(LN2, 0.0), sup_plds([B1, B2]), B1, B2)
    assert cert is not None
    assert cert.gap > 0
    d.update(eps_star=f"{cert.eps_star:.5f}", gap=f"{cert.gap:.3g}")


def test_criterion_10_gdp_figures(tmp_path, capsys):
  with criterion(10, "figures 3a and 3b: Gaussian budget counter-examples", 120) as d:
    for which in ("3a", "3b"):
      t0 = time.perf_counter()
      assert main(["figure", which, "--out", str(tmp_path)]) == 0
      assert time.perf_counter() - t0 < 60, f"figure {which} exceeded 60s"
      summary = json.loads((tmp_path / f"fig{which}.json").read_text(encoding="utf-8"))
      d[which] = (f"mu={summary['mu']:.4f},rhs_margin={summary['rhs_margin']:.3g},"
                  f"lhs_margin={summary['lhs_margin']:.3g}")
      assert summary["rhs_margin"] >= 1e-4
      assert -summary["lhs_margin"] >= 1e-4
  capsys.readouterr()
