"""Brute-force ground truth for tradeoff curves.

A tradeoff curve is realised as a finite testing pair: ``P`` uniform over
``grid`` cells of [0, 1], and ``Q`` with cell masses equal to the integral of
``-f'(1 - x)`` over each cell plus an atom ``1 - f(0)`` on an extra outcome.
The optimal tests of a discrete pair are then computed by a likelihood-ratio
sweep. Nothing here goes through PLDs or hockey-stick curves.
"""

from __future__ import annotations

from typing import Hashable, Mapping, Tuple, Union

import numpy as np

from privfilter.curves import TradeoffCurve, canonical, check_tradeoff, eval_tradeoff
from privfilter.errors import DomainError, EnumerationGuardError

MAX_GRID = 2000
TERMINAL = "terminal"

Dist = Union[Mapping[Hashable, float], np.ndarray]


def realize(f: TradeoffCurve, grid: int) -> Tuple[np.ndarray, np.ndarray]:
  """Discrete pair ``(P, Q)`` whose tradeoff curve interpolates ``f`` at ``j / grid``.

  Outcome ``j < grid`` is the cell ``[j / grid, (j + 1) / grid]``; outcome
  ``grid`` is the terminal atom, where ``P`` has no mass.
  """
  check_tradeoff(f)
  if grid < 10:
    raise DomainError("grid must be at least 10")
  x = np.linspace(0.0, 1.0, grid + 1)
  fx = np.asarray(eval_tradeoff(f, 1.0 - x))
  q = np.append(np.maximum(np.diff(fx), 0.0), f.delta)
  p = np.append(np.full(grid, 1.0 / grid), 0.0)
  return p, q


def _as_arrays(P: Dist, Q: Dist) -> Tuple[np.ndarray, np.ndarray]:
  if isinstance(P, Mapping) or isinstance(Q, Mapping):
    if not (isinstance(P, Mapping) and isinstance(Q, Mapping)):
      raise DomainError("P and Q must both be mappings or both be arrays")
    if set(P) != set(Q):
      raise DomainError("P and Q are defined on different label sets")
    keys = list(P)
    return (np.array([P[k] for k in keys], dtype=float),
            np.array([Q[k] for k in keys], dtype=float))
  p, q = np.asarray(P, dtype=float).ravel(), np.asarray(Q, dtype=float).ravel()
  if p.shape != q.shape:
    raise DomainError("P and Q are defined on different label sets")
  return p, q


def np_tradeoff(P: Dist, Q: Dist) -> TradeoffCurve:
  """Exact tradeoff curve ``T(P, Q)`` of two discrete distributions.

  The most powerful test rejects outcomes in decreasing order of ``Q / P``.
  Outcomes with ``P = 0`` are rejected for free and set ``1 - f(0)``; every
  distinct ratio contributes one segment of width ``P(group)`` and slope
  ``-Q(group) / P(group)``.
  """
  p, q = _as_arrays(P, Q)
  if np.any(p < 0) or np.any(q < 0):
    raise DomainError("negative probability")
  free = p <= 0
  delta = float(q[free].sum())
  p, q = p[~free], q[~free]
  ratio = q / p
  order = np.argsort(-ratio, kind="stable")
  ratio, p, q = ratio[order], p[order], q[order]
  # One sweep step per distinct ratio (relative tolerance absorbs product rounding).
  new = np.ones(len(ratio), dtype=bool)
  if len(ratio) > 1:
    new[1:] = np.abs(np.diff(ratio)) > 1e-12 * np.maximum(ratio[1:], 1e-300)
  starts = np.flatnonzero(new)
  wp = np.add.reduceat(p, starts)
  wq = np.add.reduceat(q, starts)
  # Normalise against accumulated rounding so widths sum to one.
  wp = wp / wp.sum()
  wq = wq * (1.0 - delta) / wq.sum() if wq.sum() > 0 else wq
  return canonical(list(zip(wp.tolist(), (-wq / wp).tolist())), delta)


def np_compose_oracle(f1: TradeoffCurve, f2: TradeoffCurve, grid: int) -> TradeoffCurve:
  """``f1 (x) f2`` by the optimal test on the product of realisations."""
  if grid > MAX_GRID:
    raise EnumerationGuardError(f"grid {grid} exceeds {MAX_GRID}")
  p1, q1 = realize(f1, grid)
  p2, q2 = realize(f2, grid)
  return np_tradeoff(np.multiply.outer(p1, p2), np.multiply.outer(q1, q2))


def sup_distance(f: TradeoffCurve, g: TradeoffCurve) -> float:
  """Exact sup-norm distance between two piecewise-linear tradeoff curves."""
  xs = np.unique(np.concatenate([f.breakpoints, g.breakpoints]))
  return float(np.max(np.abs(np.asarray(eval_tradeoff(f, xs)) - eval_tradeoff(g, xs))))
