"""Blackwell order, suprema, envelopes and well-ordering checks.

Everything is decided on hockey-stick curves: ``L1 <= L2`` in the Blackwell
order iff ``h_L1 <= h_L2`` pointwise. For piecewise-linear curves the
difference of two hockey-sticks is linear between the union of their bends,
so checking the bends is exact.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from privfilter import _tol
from privfilter.compose import LOG_X_GRID, hockey_of
from privfilter.curves import TradeoffCurve, canonical, eval_tradeoff
from privfilter.errors import DomainError, EnumerationGuardError
from privfilter.pld import (DiscretePLD, HockeyStickCurve, as_hockey, as_pld, convolve,
                            eval_hockey, hockey_to_pld, pld_to_hockey, pld_to_tradeoff,
                            tradeoff_to_pld)

DOMINATES = "dominates"
DOMINATED = "dominated"
EQUAL = "equal"
CROSSING = "crossing"

ENUMERATION_GUARD = 100_000


@dataclasses.dataclass(frozen=True)
class Witness:
  """A point where two curves are strictly separated.

  ``gap = lhs - rhs``; ``x_or_alpha`` is an ``x > 0`` for hockey-stick
  comparisons and an ``alpha`` in [0, 1] for tradeoff comparisons.
  """
  x_or_alpha: float
  lhs: float
  rhs: float
  gap: float

  def to_json(self) -> dict:
    return {"x_or_alpha": self.x_or_alpha, "lhs": self.lhs, "rhs": self.rhs, "gap": self.gap}


@dataclasses.dataclass(frozen=True)
class OrderVerdict:
  """Outcome of :func:`compare`.

  ``relation`` reads left to right: ``dominates`` means ``a`` dominates ``b``
  in the Blackwell order (``h_a >= h_b``, tradeoff ``f_a <= f_b``).
  ``within_tolerance`` is set when an analytic comparison found only gaps
  below ``ANALYTIC_TOL``.
  """
  relation: str
  witnesses: Tuple[Witness, ...] = ()
  within_tolerance: bool = False
  tradeoff_crossings: Tuple[float, ...] = ()

  @property
  def a_le_b(self) -> bool:
    """``a`` is dominated by (or equal to) ``b``."""
    return self.relation in (DOMINATED, EQUAL)

  def to_json(self) -> dict:
    out = {"verdict": self.relation, "witnesses": [w.to_json() for w in self.witnesses]}
    if self.within_tolerance:
      out["within_tolerance"] = True
    if self.tradeoff_crossings:
      out["tradeoff_crossings"] = list(self.tradeoff_crossings)
    return out


def _exact_hockey(obj) -> Optional[HockeyStickCurve]:
  if isinstance(obj, (DiscretePLD, TradeoffCurve, HockeyStickCurve)):
    return as_hockey(obj)
  return None


def _verdict_from_gaps(xs, ha, hb, tol) -> OrderVerdict:
  gaps = ha - hb
  i_max, i_min = int(np.argmax(gaps)), int(np.argmin(gaps))
  above = gaps[i_max] > tol
  below = gaps[i_min] < -tol
  w_up = Witness(float(xs[i_max]), float(ha[i_max]), float(hb[i_max]), float(gaps[i_max]))
  w_dn = Witness(float(xs[i_min]), float(ha[i_min]), float(hb[i_min]), float(gaps[i_min]))
  if above and below:
    return OrderVerdict(CROSSING, (w_up, w_dn))
  if above:
    return OrderVerdict(DOMINATES, (w_up,))
  if below:
    return OrderVerdict(DOMINATED, (w_dn,))
  return OrderVerdict(EQUAL)


def knots(*curves: HockeyStickCurve) -> np.ndarray:
  """Sorted union of bend points."""
  xs = np.concatenate([c.xs for c in curves] + [np.array([1.0])])
  return np.unique(xs)


def compare_hockey(ha: HockeyStickCurve, hb: HockeyStickCurve) -> OrderVerdict:
  """Exact comparison of two piecewise-linear hockey-stick curves.

  Both start at 1 as ``x -> 0`` and are affine between consecutive bends and
  flat after the last one, so the sign pattern of ``h_a - h_b`` is determined
  by its values at the merged bends together with the initial slopes.
  """
  xs = knots(ha, hb)
  va, vb = eval_hockey(ha, xs), eval_hockey(hb, xs)
  v = _verdict_from_gaps(xs, np.atleast_1d(va), np.atleast_1d(vb), _tol.EPS)
  return v


def compare(a, b) -> OrderVerdict:
  """Blackwell comparison of two curves or PLDs via their hockey-sticks.

  Exact when both arguments are piecewise-linear (PLDs, tradeoff curves or
  hockey-stick curves). When either is analytic the comparison runs on the
  log-grid with a refinement pass, and gaps below ``ANALYTIC_TOL`` count as
  equal.
  """
  ea, eb = _exact_hockey(a), _exact_hockey(b)
  if ea is not None and eb is not None:
    v = compare_hockey(ea, eb)
    if isinstance(a, TradeoffCurve) and isinstance(b, TradeoffCurve) and v.relation == CROSSING:
      v = dataclasses.replace(v, tradeoff_crossings=tuple(tradeoff_crossing_points(a, b)))
    return v
  return compare_analytic(a, b)


def compare_analytic(a, b, tol: float = _tol.ANALYTIC_TOL) -> OrderVerdict:
  """Grid comparison for analytic curve handles.

  The gap ``h_a - h_b`` is sampled on ``LOG_X_GRID`` (plus any exact bends)
  and its extreme values are refined by bounded scalar optimisation in
  ``log x`` around the best grid points.
  """
  fa, fb = hockey_of(a), hockey_of(b)
  t = LOG_X_GRID
  extra = [np.log(c.xs) for c in (_exact_hockey(a), _exact_hockey(b)) if c is not None]
  if extra:
    t = np.unique(np.concatenate([t] + extra))
  xs = np.exp(t)
  ha, hb = np.asarray(fa(xs), dtype=float), np.asarray(fb(xs), dtype=float)
  gaps = ha - hb

  def refine(sign):
    k = int(np.argmax(sign * gaps))
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, len(t) - 1)]
    best_t, best = t[k], sign * gaps[k]
    if hi > lo:
      res = optimize.minimize_scalar(
          lambda s: -sign * float(fa(math.exp(s)) - fb(math.exp(s))),
          bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
      if -res.fun > best:
        best_t, best = res.x, -res.fun
    x = math.exp(best_t)
    return x, float(fa(x)), float(fb(x))

  xu, au, bu = refine(1.0)
  xd, ad, bd = refine(-1.0)
  v = _verdict_from_gaps(np.array([xu, xd]), np.array([au, ad]), np.array([bu, bd]), tol)
  if v.relation == EQUAL and max(abs(au - bu), abs(ad - bd)) > _tol.EPS:
    v = dataclasses.replace(v, within_tolerance=True)
  return v


def tradeoff_crossing_points(f: TradeoffCurve, g: TradeoffCurve) -> List[float]:
  """Alphas where ``f - g`` changes sign (exact, by linear interpolation)."""
  xs = np.unique(np.concatenate([f.breakpoints, g.breakpoints]))
  d = np.asarray(eval_tradeoff(f, xs)) - np.asarray(eval_tradeoff(g, xs))
  out: List[float] = []
  sign_prev, x_prev, d_prev = 0, None, None
  for x, dv in zip(xs, d):
    s = 0 if abs(dv) <= _tol.EPS else (1 if dv > 0 else -1)
    if s != 0:
      if sign_prev != 0 and s != sign_prev:
        out.append(float(x_prev + (x - x_prev) * d_prev / (d_prev - dv)))
      sign_prev, x_prev, d_prev = s, x, dv
  return out


def compare_tradeoff(f: TradeoffCurve, g: TradeoffCurve) -> OrderVerdict:
  """Pointwise comparison of tradeoff values at merged breakpoints.

  ``dominates`` means ``f >= g`` (``f`` is the more private curve).
  """
  xs = np.unique(np.concatenate([f.breakpoints, g.breakpoints]))
  return _verdict_from_gaps(xs, np.asarray(eval_tradeoff(f, xs)),
                            np.asarray(eval_tradeoff(g, xs)), _tol.EPS)


# -- suprema -----------------------------------------------------------------

def _line_at(h: HockeyStickCurve, x0: float) -> Tuple[float, float]:
  """Value and right slope of ``h`` at ``x0``."""
  if not h.bends or x0 < h.xs[0]:
    return 1.0 + h.initial_slope * x0, h.initial_slope
  k = int(np.searchsorted(h.xs, x0, side="right")) - 1
  return h.vals[k] + h.right_slopes[k] * (x0 - h.xs[k]), float(h.right_slopes[k])


def hockey_max(curves: Sequence[HockeyStickCurve]) -> HockeyStickCurve:
  """Exact pointwise maximum of piecewise-linear hockey-stick curves.

  Sweeps the merged bend set; inside each interval the active lines are
  compared and their intersection is inserted whenever the maximiser changes.
  """
  if not curves:
    raise DomainError("empty family")
  if len(curves) == 1:
    return curves[0]
  pts = sorted(set(np.concatenate([c.xs for c in curves]).tolist()))
  if not pts:
    s0 = max(c.initial_slope for c in curves)
    return HockeyStickCurve((), s0, max(c.terminal_value for c in curves), ())

  def top(x0):
    lines = [_line_at(c, x0) for c in curves]
    vmax = max(v for v, _ in lines)
    smax = max(s for v, s in lines if v >= vmax - _tol.EPS * 1e-3)
    return vmax, smax, lines

  s0 = max(c.initial_slope for c in curves)
  # Crossings inside (0, first bend) cannot occur: all lines pass through (0, 1).
  out_x, out_v, out_s = [], [], []
  queue = list(pts)
  i = 0
  while i < len(queue):
    x0 = queue[i]
    v0, sl, _ = top(x0)
    out_x.append(x0)
    out_v.append(v0)
    out_s.append(sl)
    if i + 1 < len(queue):
      x1 = queue[i + 1]
      v1, _, lines1 = top(x1)
      # The maximiser at x0 continues linearly; if it is overtaken before x1
      # insert the crossing with the line that is on top at x1.
      pred = v0 + sl * (x1 - x0)
      if pred < v1 - _tol.EPS * 1e-3:
        best = None
        for c in curves:
          vc, sc = _line_at(c, x0)
          if sc > sl:
            # Intersection of y = v0 + sl (x - x0) with y = vc + sc (x - x0).
            xc = x0 + (v0 - vc) / (sc - sl)
            if x0 < xc < x1 and (best is None or xc < best):
              best = xc
        if best is not None and best - x0 > 1e-15 * max(1.0, x0) and x1 - best > 1e-15 * x1:
          queue.insert(i + 1, best)
    i += 1
  out_s[-1] = 0.0
  terminal = max(c.terminal_value for c in curves)
  return HockeyStickCurve(tuple(zip(out_x, out_v)), s0, terminal, tuple(out_s))


def sup_plds(family: Sequence[DiscretePLD]) -> DiscretePLD:
  """Least upper bound of a family of PLDs in the Blackwell order."""
  if not family:
    raise DomainError("sup of an empty family")
  if len(family) == 1:
    return as_pld(family[0])
  return hockey_to_pld(hockey_max([as_hockey(L) for L in family]))


def envelope_tradeoff(family: Sequence[TradeoffCurve]) -> TradeoffCurve:
  """Lower convex envelope of tradeoff curves (the tradeoff of the sup PLD)."""
  if not family:
    raise DomainError("envelope of an empty family")
  if len(family) == 1:
    return family[0]
  return pld_to_tradeoff(sup_plds([tradeoff_to_pld(f) for f in family]))


def envelope_tradeoff_hull(family: Sequence[TradeoffCurve]) -> TradeoffCurve:
  """Envelope computed directly as the lower convex hull of all vertices."""
  if not family:
    raise DomainError("envelope of an empty family")
  pts = sorted({(float(a), float(v)) for f in family for a, v in zip(f.breakpoints, f.values)})
  hull: List[Tuple[float, float]] = []
  for p in pts:
    while len(hull) >= 2:
      (x1, y1), (x2, y2) = hull[-2], hull[-1]
      if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
        hull.pop()
      else:
        break
    hull.append(p)
  # Keep only the lowest point at alpha = 0.
  while len(hull) >= 2 and hull[1][0] == hull[0][0]:
    hull.pop(0)
  segs = [(x2 - x1, (y2 - y1) / (x2 - x1)) for (x1, y1), (x2, y2) in zip(hull, hull[1:])
          if x2 > x1]
  return canonical(segs, 1.0 - hull[0][1])


def support(h) -> List[float]:
  """Points where a hockey-stick curve bends (strict slope increase)."""
  h = as_hockey(h)
  if not h.bends:
    return []
  left = np.concatenate([[h.initial_slope], h.right_slopes[:-1]])
  ds = h.right_slopes - left
  return [float(x) for x, d in zip(h.xs, ds) if d > _tol.EPS]


# -- closure checks ----------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class WellOrderReport:
  """Result of :func:`check_well_ordered`.

  ``pair`` names the first crossing pair as tuples of family indices (a
  multiset of played members each); ``degenerate`` lists members with at most
  one finite atom, for which the well-ordering criterion is not decisive.
  """
  well_ordered: bool
  depth: int
  elements: int
  pair: Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]] = None
  verdict: Optional[OrderVerdict] = None
  degenerate: Tuple[int, ...] = ()

  def to_json(self) -> dict:
    out = {
        "verdict": "well-ordered" if self.well_ordered else "not-well-ordered",
        "depth": self.depth,
        "elements": self.elements,
        "scope": f"compositions of length <= {self.depth} over a finite family",
        "degenerate_members": list(self.degenerate),
    }
    if self.pair is not None:
      out["pair"] = [list(self.pair[0]), list(self.pair[1])]
      out["witnesses"] = [w.to_json() for w in self.verdict.witnesses]
    else:
      out["witnesses"] = []
    return out


def closure_size(n: int, depth: int) -> int:
  return sum(math.comb(n + k - 1, k) for k in range(1, depth + 1))


def check_well_ordered(family: Sequence[DiscretePLD], depth: int,
                       guard: int = ENUMERATION_GUARD) -> WellOrderReport:
  """Checks that all compositions of up to ``depth`` members form a chain."""
  if not family:
    raise DomainError("empty family")
  if depth < 1:
    raise DomainError("depth must be positive")
  family = [as_pld(L) for L in family]
  size = closure_size(len(family), depth)
  if size > guard:
    raise EnumerationGuardError(f"closure has {size} elements, guard is {guard}")
  degenerate = tuple(i for i, L in enumerate(family) if len(L.atoms) <= 1)
  elems: List[Tuple[Tuple[int, ...], HockeyStickCurve]] = []
  plds = {}
  for k in range(1, depth + 1):
    for combo in itertools.combinations_with_replacement(range(len(family)), k):
      prev = plds.get(combo[:-1])
      L = family[combo[-1]] if prev is None else convolve(prev, family[combo[-1]])
      plds[combo] = L
      elems.append((combo, pld_to_hockey(L)))
  for (ca, ha), (cb, hb) in itertools.combinations(elems, 2):
    v = compare_hockey(ha, hb)
    if v.relation == CROSSING:
      return WellOrderReport(False, depth, len(elems), (ca, cb), v, degenerate)
  return WellOrderReport(True, depth, len(elems), degenerate=degenerate)


@dataclasses.dataclass(frozen=True)
class CommutativityReport:
  """Result of :func:`check_commutativity`.

  ``hockey`` witnesses ``h_lhs - h_rhs`` at its maximum; ``tradeoff`` gives
  ``f_rhs - f_lhs`` at its maximum (both non-negative).
  """
  commutes: bool
  hockey: Optional[Witness]
  tradeoff: Optional[Witness]
  lhs: DiscretePLD
  rhs: DiscretePLD

  def to_json(self) -> dict:
    return {
        "verdict": "commutes" if self.commutes else "does-not-commute",
        "witnesses": [w.to_json() for w in (self.hockey, self.tradeoff) if w is not None],
    }


def max_hockey_gap(a: DiscretePLD, b: DiscretePLD) -> Witness:
  """``max_x h_a(x) - h_b(x)`` over merged bends (exact)."""
  ha, hb = pld_to_hockey(a), pld_to_hockey(b)
  xs = knots(ha, hb)
  va, vb = np.atleast_1d(eval_hockey(ha, xs)), np.atleast_1d(eval_hockey(hb, xs))
  k = int(np.argmax(va - vb))
  return Witness(float(xs[k]), float(va[k]), float(vb[k]), float(va[k] - vb[k]))


def max_tradeoff_gap(upper: TradeoffCurve, lower: TradeoffCurve) -> Witness:
  """``max_alpha upper(alpha) - lower(alpha)`` over merged breakpoints."""
  xs = np.unique(np.concatenate([upper.breakpoints, lower.breakpoints]))
  vu, vl = np.asarray(eval_tradeoff(upper, xs)), np.asarray(eval_tradeoff(lower, xs))
  k = int(np.argmax(vu - vl))
  return Witness(float(xs[k]), float(vl[k]), float(vu[k]), float(vu[k] - vl[k]))


def check_commutativity(L: DiscretePLD, primes: Sequence[DiscretePLD]) -> CommutativityReport:
  """Tests ``L (+) sup(primes) == sup{L (+) L' : L' in primes}``.

  The left side always dominates the right; a strict gap is a witness that
  the family does not admit a universally free filter.
  """
  L = as_pld(L)
  primes = [as_pld(p) for p in primes]
  lhs = convolve(L, sup_plds(primes))
  rhs = sup_plds([convolve(L, p) for p in primes])
  hw = max_hockey_gap(lhs, rhs)
  tw = max_tradeoff_gap(pld_to_tradeoff(rhs), pld_to_tradeoff(lhs))
  ok = hw.gap <= _tol.EPS
  return CommutativityReport(ok, None if ok else hw, None if ok else tw, lhs, rhs)


@dataclasses.dataclass(frozen=True)
class GapCertificate:
  """Certificate that ``A (+) B`` strictly dominates ``sup{A (+) B1, A (+) B2}``.

  ``eps1, eps2`` are support points of ``A`` and ``u`` the shift with
  ``h_Bi(e^{eps_i + u}) < h_B(e^{eps_i + u})``; the gap is verified at
  ``x = e^{eps_star}`` with ``eps_star = eps1 + eps2 + u``.
  """
  eps1: float
  eps2: float
  u: float
  eps_star: float
  lhs: float
  rhs: float
  gap: float

  def to_json(self) -> dict:
    return dataclasses.asdict(self)


def gap_certificate(A: DiscretePLD, B: DiscretePLD, B1: DiscretePLD,
                    B2: DiscretePLD) -> Optional[GapCertificate]:
  """Searches for a gap-amplification certificate.

  Shifts ``u`` are drawn from ``{log x_b - eps_i}`` over bends ``x_b`` of
  ``h_B, h_B1, h_B2`` plus midpoints of consecutive candidates. Returns the
  certificate with the largest verified gap, or ``None``.

  Raises:
    DomainError: if ``B1`` or ``B2`` is not dominated by ``B``.
  """
  A, B, B1, B2 = (as_pld(v) for v in (A, B, B1, B2))
  for name, Bi in (("B1", B1), ("B2", B2)):
    if not compare(Bi, B).a_le_b:
      raise DomainError(f"{name} is not dominated by B")
  hB, h1, h2 = pld_to_hockey(B), pld_to_hockey(B1), pld_to_hockey(B2)
  logs = np.unique(np.log(knots(hB, h1, h2)))
  logs = np.unique(np.concatenate([logs, (logs[1:] + logs[:-1]) / 2, [logs[0] - 1, logs[-1] + 1]]))
  supp = A.zs
  gap1 = lambda t: float(eval_hockey(hB, math.exp(t)) - eval_hockey(h1, math.exp(t)))
  gap2 = lambda t: float(eval_hockey(hB, math.exp(t)) - eval_hockey(h2, math.exp(t)))
  AB, AB1, AB2 = (pld_to_hockey(convolve(A, v)) for v in (B, B1, B2))
  best: Optional[GapCertificate] = None
  for e1 in supp:
    for e2 in supp:
      us = np.unique(np.concatenate([logs - e1, logs - e2]))
      for u in us:
        if gap1(e1 + u) <= _tol.EPS or gap2(e2 + u) <= _tol.EPS:
          continue
        es = float(e1 + e2 + u)
        x = math.exp(es)
        lhs = float(eval_hockey(AB, x))
        rhs = max(float(eval_hockey(AB1, x)), float(eval_hockey(AB2, x)))
        if lhs - rhs > _tol.EPS and (best is None or lhs - rhs > best.gap):
          best = GapCertificate(float(e1), float(e2), float(u), es, lhs, rhs, lhs - rhs)
  return best
