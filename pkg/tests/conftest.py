"""Shared random generators for valid curves and PLDs."""

import math

import numpy as np
import pytest

from privfilter.oracle import np_tradeoff
from privfilter.pld import make_pld


def random_pair(rng, n, p_zero=0.15):
  """Random discrete pair ``(P, Q)`` on ``n`` outcomes, with some zero masses."""
  p = rng.random(n) * (rng.random(n) > p_zero)
  q = rng.random(n) * (rng.random(n) > p_zero)
  if p.sum() == 0:
    p[0] = 1.0
  if q.sum() == 0:
    q[-1] = 1.0
  return p / p.sum(), q / q.sum()


def random_pld(rng, n):
  """Privacy loss distribution of a random pair on ``n`` outcomes."""
  p, q = random_pair(rng, n)
  both = (p > 0) & (q > 0)
  return make_pld(np.log(p[both] / q[both]), p[both], p[(p > 0) & (q == 0)].sum())


def random_tradeoff(rng, max_segments):
  """Random piecewise-linear tradeoff curve with at most ``max_segments`` segments."""
  n = int(rng.integers(1, max_segments))
  p, q = random_pair(rng, n + 1)
  return np_tradeoff(p, q)


@pytest.fixture
def rng():
  return np.random.default_rng(20240611)


LN2, LN3, LN4 = math.log(2), math.log(3), math.log(4)


def pytest_terminal_summary(terminalreporter):
  try:
    from test_acceptance import RESULTS
  except ImportError:
    return
  if not RESULTS:
    return
  terminalreporter.section("acceptance criteria")
  for key in sorted(RESULTS):
    terminalreporter.write_line(RESULTS[key])
