"""The natural privacy filter, its adversary value recursion and counter-examples.

The filter accepts a query when the convolution of everything accepted so far
with the new query is still dominated by the budget. Whether such a filter is
*free* (the interactive mechanism it induces stays within budget) is decided
by :func:`is_free` through the value recursion over a finite query family.
All verdicts here are exact only for finite families and finite capacity.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from privfilter import _tol
from privfilter.compose import (approx_gaussian, compose_curves, compose_delta_with_hockey,
                                compose_piecewise, is_exact, tradeoff_values)
from privfilter.curves import (GaussianTradeoff, TradeoffCurve, eval_gaussian, make_approx_dp,
                               symmetric_fixed_point)
from privfilter.errors import (CapacityError, DomainError, EnumerationGuardError,
                               MalformedStrategyError, NotCrossingError, SearchFailure)
from privfilter.order import (CROSSING, OrderVerdict, Witness, compare, envelope_tradeoff,
                              max_hockey_gap, sup_plds)
from privfilter.pld import (DiscretePLD, as_pld, convolve, esscher_pair, identity_pld, make_pld,
                            pld_to_hockey, pld_to_json, pld_to_tradeoff)

SCOPE_NOTE = "exact for the finite query family and finite capacity examined"


# -- filter state machine ----------------------------------------------------

@dataclasses.dataclass(frozen=True)
class FilterState:
  """State of a natural filter.

  ``budget`` and ``consumed`` are PLDs for exact filters. An analytic budget
  (e.g. a Gaussian tradeoff curve) makes ``consumed`` an analytic curve too;
  ``consumed is None`` then stands for the identity.
  """
  budget: object
  consumed: object
  capacity: int
  history: Tuple[Tuple[object, bool], ...] = ()
  steps_used: int = 0
  halt_on_reject: bool = False
  halted: bool = False

  @property
  def exact(self) -> bool:
    return isinstance(self.budget, DiscretePLD)


def new_filter(budget, capacity: int, halt_on_reject: bool = False) -> FilterState:
  """Fresh filter with nothing consumed."""
  if capacity < 1:
    raise DomainError("capacity must be positive")
  if is_exact(budget):
    return FilterState(as_pld(budget), identity_pld(), capacity, halt_on_reject=halt_on_reject)
  return FilterState(budget, None, capacity, halt_on_reject=halt_on_reject)


def _check_room(state: FilterState):
  if state.steps_used >= state.capacity:
    raise CapacityError(f"capacity {state.capacity} exhausted")
  if state.halted:
    raise CapacityError("filter halted after a rejection")


def _advance(state, query, candidate, accepted):
  return dataclasses.replace(
      state,
      consumed=candidate if accepted else state.consumed,
      history=state.history + ((query, accepted),),
      steps_used=state.steps_used + 1,
      halted=state.halt_on_reject and not accepted)


def filter_step(state: FilterState, query: DiscretePLD) -> Tuple[FilterState, bool]:
  """One round: accept iff ``consumed (+) query`` is dominated by the budget.

  Every round counts against capacity, accepted or not.

  Raises:
    CapacityError: no rounds left (or halted after a rejection).
  """
  _check_room(state)
  if not state.exact:
    return fdp_filter_step(state, pld_to_tradeoff(as_pld(query)))
  query = as_pld(query)
  candidate = convolve(state.consumed, query)
  accepted = compare(candidate, state.budget).a_le_b
  return _advance(state, query, candidate, accepted), accepted


def fdp_filter_step(state: FilterState, f) -> Tuple[FilterState, bool]:
  """Tradeoff-curve view of :func:`filter_step`.

  Accepts iff the composition of accepted curves with ``f`` stays above the
  budget curve. Analytic curves (Gaussian, delta-shifted Gaussian) are
  composed in closed form where possible and compared on the log-grid.
  """
  _check_room(state)
  if state.exact and is_exact(f):
    return filter_step(state, as_pld(f))
  if state.exact:
    consumed = pld_to_tradeoff(state.consumed)
    budget = pld_to_tradeoff(state.budget)
  else:
    consumed, budget = state.consumed, state.budget
  candidate = f if _is_identity(consumed) else compose_curves(consumed, f)
  accepted = compare(candidate, budget).a_le_b
  if state.exact:
    candidate = state.consumed if not accepted else candidate
  return _advance(state, f, candidate, accepted), accepted


def _is_identity(c) -> bool:
  if c is None:
    return True
  if isinstance(c, DiscretePLD):
    return len(c.atoms) == 1 and c.atoms[0][0] == 0.0 and c.inf_mass == 0.0
  if isinstance(c, TradeoffCurve):
    return len(c.segments) == 1 and c.segments[0][1] == -1.0 and c.delta == 0.0
  return False


# -- value recursion ---------------------------------------------------------

RECURSION_GUARD = 100_000


def value_recursion(family: Sequence[DiscretePLD], budget: DiscretePLD, k: int,
                    guard: int = RECURSION_GUARD) -> DiscretePLD:
  """Worst-case remaining privacy cost ``V_k`` of an adversary facing the filter.

  ``V_0 = Id`` and ``V_j(c) = sup{L (+) V_{j-1}(c (+) L) : c (+) L <= budget}``
  over ``L`` in ``family``. ``Id`` is always admissible (a rejected query
  releases nothing), so it is added to the family when missing. Memoised on
  the consumed PLD, since only the convolution of played queries matters.

  Raises:
    EnumerationGuardError: more than ``guard`` distinct states are visited.
  """
  if k < 0:
    raise DomainError("k must be non-negative")
  fam = [as_pld(L) for L in family]
  if not any(_is_identity(L) for L in fam):
    fam.append(identity_pld())
  budget = as_pld(budget)
  budget_h = pld_to_hockey(budget)
  memo: Dict[tuple, DiscretePLD] = {}
  admissible: Dict[tuple, bool] = {}

  def ok(c: DiscretePLD) -> bool:
    key = c.key()
    if key not in admissible:
      admissible[key] = compare(pld_to_hockey(c), budget_h).a_le_b
    return admissible[key]

  def V(j: int, c: DiscretePLD) -> DiscretePLD:
    if j == 0:
      return identity_pld()
    key = (j, c.key())
    if key in memo:
      return memo[key]
    if len(memo) >= guard:
      raise EnumerationGuardError(f"value recursion exceeded {guard} states")
    options = []
    for L in fam:
      nxt = convolve(c, L)
      if ok(nxt):
        options.append(convolve(L, V(j - 1, nxt)))
    out = sup_plds(options) if options else identity_pld()
    memo[key] = out
    return out

  return V(k, identity_pld())


@dataclasses.dataclass(frozen=True)
class FreeVerdict:
  """Outcome of :func:`is_free`: ``value`` is ``V_k`` and ``order`` its
  comparison against the budget."""
  free: bool
  value: DiscretePLD
  order: OrderVerdict
  witness: Optional[Witness]
  k: int

  def to_json(self) -> dict:
    return {
        "verdict": "free" if self.free else "not-free",
        "k": self.k,
        "scope": SCOPE_NOTE,
        "witnesses": [self.witness.to_json()] if self.witness else [],
        "value_pld": pld_to_json(self.value),
    }


def is_free(family: Sequence[DiscretePLD], budget: DiscretePLD, k: int) -> FreeVerdict:
  """Decides whether the natural filter is free for ``k`` queries from ``family``."""
  budget = as_pld(budget)
  V = value_recursion(family, budget, k)
  v = compare(V, budget)
  if v.a_le_b:
    return FreeVerdict(True, V, v, None, k)
  return FreeVerdict(False, V, v, max_hockey_gap(V, budget), k)


# -- counter-examples --------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class CrossingCounterexample:
  """Two crossing (eps, delta) curves for which composition does not commute
  with the lower convex envelope.

  ``lhs = g1 (x) conv(g1, g2)`` and ``rhs = conv(g1 (x) g1, g1 (x) g2)``; the
  lhs lies strictly below the rhs on ``(0, alpha1_star**2]``.
  """
  g1: TradeoffCurve
  g2: TradeoffCurve
  params: Tuple[float, float, float, float]
  case: int
  alpha1_star: float
  alpha_range: Tuple[float, float]
  lhs: TradeoffCurve
  rhs: TradeoffCurve
  lhs_first_slope: float
  rhs_first_slope: float
  predicted_lhs_slope: float
  predicted_rhs_slope: float
  max_gap: float
  gap_location: float
  global_max_gap: float
  global_gap_location: float

  def to_json(self) -> dict:
    return {
        "params": {"eps1": self.params[0], "delta1": self.params[1],
                   "eps2": self.params[2], "delta2": self.params[3]},
        "case": self.case,
        "alpha1_star": self.alpha1_star,
        "alpha_range": list(self.alpha_range),
        "lhs_first_slope": self.lhs_first_slope,
        "rhs_first_slope": self.rhs_first_slope,
        "predicted_lhs_slope": self.predicted_lhs_slope,
        "predicted_rhs_slope": self.predicted_rhs_slope,
        "max_gap": self.max_gap,
        "gap_location": self.gap_location,
        "global_max_gap": self.global_max_gap,
        "global_gap_location": self.global_gap_location,
    }

  def samples(self, alphas) -> Dict[str, np.ndarray]:
    a = np.asarray(alphas, dtype=float)
    return {"alpha": a, "lhs": self.lhs(a), "rhs": self.rhs(a)}


def lhs_rhs(g1: TradeoffCurve, g2: TradeoffCurve) -> Tuple[TradeoffCurve, TradeoffCurve]:
  """``(g1 (x) conv(g1, g2), conv(g1 (x) g1, g1 (x) g2))``."""
  lhs = compose_piecewise(g1, envelope_tradeoff([g1, g2]))
  rhs = envelope_tradeoff([compose_piecewise(g1, g1), compose_piecewise(g1, g2)])
  return lhs, rhs


def build_crossing_counterexample(eps1: float, delta1: float, eps2: float,
                                  delta2: float) -> CrossingCounterexample:
  """Counter-example bundle for two crossing (eps, delta)-DP curves.

  The pair is reordered so that ``g2`` starts lower (larger delta). Case 1 is
  ``g1 (x) g1 (a1*^2) < g1 (x) g2 (a1*^2)``, case 2 the converse.

  Raises:
    NotCrossingError: the curves are ordered.
  """
  if delta1 > delta2:
    eps1, delta1, eps2, delta2 = eps2, delta2, eps1, delta1
  g1, g2 = make_approx_dp(eps1, delta1), make_approx_dp(eps2, delta2)
  if compare(g1, g2).relation != CROSSING:
    raise NotCrossingError("the two curves do not cross")
  a1 = symmetric_fixed_point(g1)
  a1sq = a1 * a1
  g11, g12 = compose_piecewise(g1, g1), compose_piecewise(g1, g2)
  case = 1 if g11(a1sq) < g12(a1sq) else 2
  lhs, rhs = lhs_rhs(g1, g2)
  e1 = math.exp(eps1)
  pred_lhs = e1 * (delta2 - delta1) / a1 - e1 * e1
  if case == 1:
    pred_rhs = (1.0 + e1) * (delta2 - delta1) / a1 - e1 * e1
  else:
    pred_rhs = -math.exp(eps1 + eps2)
  # Both curves start at (1 - d1)(1 - d2); the gap is checked on a grid of the range.
  grid = np.linspace(0.0, a1sq, 401)[1:]
  gaps = rhs(grid) - lhs(grid)
  if np.any(gaps <= _tol.EPS):
    raise AssertionError("lhs is not strictly below rhs on (0, a1*^2]")
  k = int(np.argmax(gaps))
  xs = np.unique(np.concatenate([lhs.breakpoints, rhs.breakpoints]))
  allgaps = rhs(xs) - lhs(xs)
  kg = int(np.argmax(allgaps))
  return CrossingCounterexample(
      g1, g2, (eps1, delta1, eps2, delta2), case, a1, (0.0, a1sq), lhs, rhs,
      float(lhs.segments[0][1]), float(rhs.segments[0][1]), pred_lhs, pred_rhs,
      float(gaps[k]), float(grid[k]), float(allgaps[kg]), float(xs[kg]))


def corollary_budget(g1: TradeoffCurve, g2: TradeoffCurve) -> TradeoffCurve:
  """``f_{eps, delta}`` matching the first segment of ``conv(g1 (x) g1, g1 (x) g2)``.

  ``e^eps`` is the magnitude of that first slope and ``delta`` the envelope's
  ``delta``. The filter accepts both two-step sessions under this budget
  while the adaptive session exceeds it.
  """
  _, rhs = lhs_rhs(g1, g2)
  return make_approx_dp(math.log(-rhs.segments[0][1]), rhs.delta)


def crossing_budget(eps1, delta1, eps2, delta2) -> Tuple[TradeoffCurve, TradeoffCurve, TradeoffCurve]:
  """``(g1, g2, budget)`` with ``g2`` the curve starting lower."""
  if delta1 > delta2:
    eps1, delta1, eps2, delta2 = eps2, delta2, eps1, delta1
  g1, g2 = make_approx_dp(eps1, delta1), make_approx_dp(eps2, delta2)
  return g1, g2, corollary_budget(g1, g2)


# -- Gaussian budget counter-examples ----------------------------------------

# Margins are measured where the envelope is at least this far from its
# endpoint values; at the endpoints every budget touches the envelope.
ENDPOINT_BAND = 1e-3
MARGIN = 1e-4


@dataclasses.dataclass(frozen=True)
class GaussianBudgetCounterexample:
  """Budget ``f`` (GDP or approximate GDP) with ``rhs >= f`` but ``lhs < f`` somewhere."""
  kind: str
  g1: TradeoffCurve
  g2: TradeoffCurve
  g_labels: Tuple[str, str]
  mu: float
  delta: float
  lhs: TradeoffCurve
  rhs: TradeoffCurve
  rhs_margin: float
  lhs_margin: float
  lhs_witness: float
  band: Tuple[float, float]

  def budget(self):
    if self.kind == "pure-GDP":
      return GaussianTradeoff(self.mu)
    return compose_delta_with_hockey(self.delta, GaussianTradeoff(self.mu))

  def budget_values(self, alphas):
    return _budget_values(self.kind, self.mu, self.delta, alphas)

  def to_json(self) -> dict:
    return {
        "kind": self.kind,
        "g1": self.g_labels[0],
        "g2": self.g_labels[1],
        "mu": self.mu,
        "delta": self.delta,
        "rhs_margin": self.rhs_margin,
        "lhs_margin": self.lhs_margin,
        "lhs_witness_alpha": self.lhs_witness,
        "margin_band": list(self.band),
    }

  def samples(self, alphas) -> Dict[str, np.ndarray]:
    a = np.asarray(alphas, dtype=float)
    return {"alpha": a, "budget": self.budget_values(a), "lhs": self.lhs(a), "rhs": self.rhs(a),
            "g1": self.g1(a), "g2": self.g2(a)}


def _budget_values(kind, mu, delta, alphas):
  a = np.asarray(alphas, dtype=float)
  if kind == "pure-GDP":
    return eval_gaussian(GaussianTradeoff(mu), a)
  return tradeoff_values(approx_gaussian(mu, delta), a)


def _band(rhs: TradeoffCurve) -> Tuple[float, float]:
  top = rhs.values[0]
  dec = np.concatenate([[True], np.diff(rhs.values) < 0])
  bp, vals = rhs.breakpoints[dec], rhs.values[dec]
  lo = float(np.interp(-(top - ENDPOINT_BAND), -vals, bp))
  hi = float(np.interp(-ENDPOINT_BAND, -vals, bp))
  return lo, hi


def budget_margins(kind, mu, delta, lhs, rhs):
  """``(rhs_ok, rhs_margin, lhs_margin, lhs_witness, band)``.

  ``rhs - budget`` is concave on every segment of ``rhs`` (the budget is
  convex), so its minimum over an interval is attained at breakpoints or at
  the interval ends: ``rhs_ok`` and ``rhs_margin`` are exact up to the
  accuracy of the budget evaluation.
  """
  bp = rhs.breakpoints
  rhs_ok = bool(np.all(rhs.values - _budget_values(kind, mu, delta, bp) >= -1e-12))
  lo, hi = _band(rhs)
  pts = np.concatenate([[lo, hi], bp[(bp > lo) & (bp < hi)]])
  rhs_margin = float(np.min(rhs(pts) - _budget_values(kind, mu, delta, pts)))
  grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, 2001), lhs.breakpoints]))
  d = lhs(grid) - _budget_values(kind, mu, delta, grid)
  k = int(np.argmin(d))
  return rhs_ok, rhs_margin, float(d[k]), float(grid[k]), (lo, hi)


def _min_feasible_mu(kind, delta, rhs) -> float:
  bp = rhs.breakpoints
  feasible = lambda mu: np.all(rhs.values - _budget_values(kind, mu, delta, bp) >= -1e-12)
  lo, hi = 0.0, 1.0
  while not feasible(hi):
    hi *= 2
    if hi > 64:
      return math.inf
  for _ in range(60):
    mid = (lo + hi) / 2
    lo, hi = (lo, mid) if feasible(mid) else (mid, hi)
  return hi


MU_SLACKS = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05)


def _gdp_candidates(kind):
  ln = math.log
  if kind == "pure-GDP":
    # delta = 0 crossing curves: two-fold pure-DP compositions against pure DP.
    for a in (ln(1.5), ln(2.0), ln(3.0)):
      for r in (1.2, 1.4, 1.6, 1.8):
        fa = make_approx_dp(a, 0.0)
        g1, g2 = compose_piecewise(fa, fa), make_approx_dp(a * r, 0.0)
        l1, l2 = f"pure:{a:.6g}x2", f"pure:{a * r:.6g}"
        yield g1, g2, (l1, l2)
        yield g2, g1, (l2, l1)
  else:
    for e1 in (ln(2.0), ln(3.0), ln(4.0)):
      for r in (0.25, 0.5):
        for d1 in (0.0, 0.01):
          for d2 in (0.05, 0.1):
            g1, g2 = make_approx_dp(e1, d1), make_approx_dp(e1 * r, d2)
            yield g1, g2, (f"approx:{e1:.6g},{d1:g}", f"approx:{e1 * r:.6g},{d2:g}")


def build_gdp_budget_counterexample(kind: str, margin: float = MARGIN) -> GaussianBudgetCounterexample:
  """Searches a fixed grid for a Gaussian-family budget violated by adaptivity.

  For each crossing pair ``(g1, g2)`` the budget parameter ``mu`` starts at
  the smallest value with ``budget <= conv(g1 (x) g1, g1 (x) g2)`` and is
  relaxed by the factors in ``MU_SLACKS``. A configuration qualifies when the
  envelope clears the budget by ``margin`` inside the band and
  ``g1 (x) conv(g1, g2)`` dips below it by ``margin``. The best-scoring
  configuration is returned.

  Raises:
    DomainError: unknown ``kind``.
    SearchFailure: no configuration meets both margins.
  """
  if kind not in ("pure-GDP", "approx-GDP"):
    raise DomainError(f"unknown kind {kind!r}")
  best, best_score, tried = None, -math.inf, 0
  best_seen = (-math.inf, math.inf)
  for g1, g2, labels in _gdp_candidates(kind):
    if compare(g1, g2).relation != CROSSING:
      continue
    lhs, rhs = lhs_rhs(g1, g2)
    delta = rhs.delta
    mu0 = _min_feasible_mu(kind, delta, rhs)
    if not math.isfinite(mu0):
      continue
    for slack in MU_SLACKS:
      tried += 1
      mu = mu0 * (1.0 + slack)
      ok, m_r, m_l, w, band = budget_margins(kind, mu, delta, lhs, rhs)
      if not ok:
        continue
      score = min(m_r, -m_l)
      if score > min(best_seen[0], -best_seen[1]):
        best_seen = (m_r, m_l)
      if m_r >= margin and -m_l >= margin and score > best_score:
        delta = 0.0 if kind == "pure-GDP" else delta
        best_score = score
        best = GaussianBudgetCounterexample(kind, g1, g2, labels, mu, delta, lhs, rhs,
                                            m_r, m_l, w, band)
  if best is None:
    raise SearchFailure(
        f"no {kind} configuration reached margin {margin}",
        {"kind": kind, "configurations": tried, "mu_slacks": list(MU_SLACKS),
         "required_margin": margin, "best_rhs_margin": best_seen[0],
         "best_lhs_margin": best_seen[1]})
  return best


# -- strategies and sessions -------------------------------------------------

REJECTED = "rejected"


@dataclasses.dataclass(frozen=True)
class StrategyTree:
  """Finite adaptive adversary.

  ``children`` maps outcome labels of ``query`` (its Esscher-pair labels,
  plus optionally ``"rejected"``) to follow-up strategies; a missing label
  means the adversary stops on that branch.
  """
  query: DiscretePLD
  children: Mapping[str, "StrategyTree"] = dataclasses.field(default_factory=dict)

  def depth(self) -> int:
    return 1 + max((c.depth() for c in self.children.values()), default=0)

  def to_json(self) -> dict:
    return {"query": pld_to_json(self.query),
            "children": {k: v.to_json() for k, v in self.children.items()}}


def outcome_labels(query: DiscretePLD) -> List[str]:
  P, _ = esscher_pair(query)
  return list(P)


def validate_strategy(tree: StrategyTree, family: Optional[Sequence[DiscretePLD]] = None):
  """Raises :class:`MalformedStrategyError` on unknown labels or foreign queries."""
  labels = set(outcome_labels(tree.query)) | {REJECTED}
  extra = set(tree.children) - labels
  if extra:
    raise MalformedStrategyError(f"unknown outcome labels {sorted(extra)}")
  if family is not None and not any(
      compare(tree.query, L).relation == "equal" for L in family):
    raise MalformedStrategyError("query is not in the declared family")
  for c in tree.children.values():
    validate_strategy(c, family)


def non_adaptive(queries: Sequence[DiscretePLD]) -> StrategyTree:
  """Strategy that plays ``queries`` in order regardless of outcomes."""
  if not queries:
    raise DomainError("empty strategy")
  rest = non_adaptive(queries[1:]) if len(queries) > 1 else None
  q = as_pld(queries[0])
  children = {lab: rest for lab in outcome_labels(q)} if rest else {}
  return StrategyTree(q, children)


def adaptive_strategy(first: DiscretePLD, options: Sequence[DiscretePLD], x: float) -> StrategyTree:
  """Two-step adversary targeting the hockey-stick at ``x``.

  After observing outcome ``o`` with privacy loss ``z``, it plays the option
  maximising ``h(x e^-z)``; outcomes with infinite loss get the first option.
  """
  first = as_pld(first)
  options = [as_pld(o) for o in options]
  hs = [pld_to_hockey(o) for o in options]
  children = {}
  for i, (z, _) in enumerate(first.atoms):
    vals = [float(h(x * math.exp(-z))) for h in hs]
    children[str(i)] = StrategyTree(options[int(np.argmax(vals))])
  for lab in outcome_labels(first):
    children.setdefault(lab, StrategyTree(options[0]))
  return StrategyTree(first, children)


@dataclasses.dataclass(frozen=True)
class Transcript:
  steps: Tuple[dict, ...]
  realized: DiscretePLD
  budget: object
  verdict: OrderVerdict
  warnings: Tuple[str, ...] = ()

  def to_json(self) -> dict:
    b = self.budget
    out = {
        "steps": list(self.steps),
        "realized_pld": pld_to_json(self.realized),
        "budget": pld_to_json(b) if isinstance(b, DiscretePLD) else repr(b),
        "verdict": {
            "within_budget": self.verdict.a_le_b,
            "order": self.verdict.to_json(),
            "scope": SCOPE_NOTE,
            "note": "accept/reject bits are reported but not charged to the budget",
        },
    }
    if self.warnings:
      out["warnings"] = list(self.warnings)
    return out


def run_session(strategy: StrategyTree, budget, capacity: int,
                family: Optional[Sequence[DiscretePLD]] = None,
                outcomes: Optional[Sequence[str]] = None,
                halt_on_reject: bool = False) -> Transcript:
  """Runs the natural filter against a strategy tree.

  Every branch of the tree is explored: the realised PLD is the exact PLD of
  the interactive mechanism (products of Esscher-pair likelihoods along each
  path, accepted queries only). The ``steps`` of the transcript follow one
  path, chosen by ``outcomes`` or, by default, the most likely outcome under
  ``P`` at every node (ties broken by outcome index).

  Raises:
    MalformedStrategyError: unknown outcome labels or foreign queries.
  """
  validate_strategy(strategy, family)
  warnings: List[str] = []
  if strategy.depth() > capacity:
    warnings.append(f"strategy depth {strategy.depth()} truncated at capacity {capacity}")
  root = new_filter(budget, capacity, halt_on_reject)
  zs: List[float] = []
  ps: List[float] = []
  neg_mass = [0.0]

  def explore(node: Optional[StrategyTree], state: FilterState, p: float, q: float):
    if node is None or state.steps_used >= capacity or state.halted:
      _leaf(p, q)
      return
    state, accepted = filter_step(state, node.query)
    if not accepted:
      explore(node.children.get(REJECTED), state, p, q)
      return
    P, Q = esscher_pair(node.query)
    for lab in P:
      explore(node.children.get(lab), state, p * P[lab], q * Q[lab])

  def _leaf(p, q):
    if p <= 0:
      neg_mass[0] += q
    elif q <= 0:
      zs.append(math.inf)
      ps.append(p)
    else:
      zs.append(math.log(p / q))
      ps.append(p)

  explore(strategy, root, 1.0, 1.0)
  realized = make_pld(zs, ps)

  steps = []
  node, state, i = strategy, root, 0
  while node is not None and state.steps_used < capacity and not state.halted:
    state, accepted = filter_step(state, node.query)
    step = {"query": pld_to_json(node.query), "accepted": accepted}
    if state.exact:
      step["consumed_after"] = pld_to_json(state.consumed)
      step["within_budget"] = compare(state.consumed, state.budget).a_le_b
    else:
      # Analytic consumption has no finite PLD; report the accepted queries instead.
      step["accepted_so_far"] = [pld_to_json(as_pld(q)) for q, ok in state.history if ok]
      step["within_budget"] = (state.consumed is None
                               or compare(state.consumed, state.budget).a_le_b)
    if accepted:
      P, _ = esscher_pair(node.query)
      if outcomes is not None and i < len(outcomes):
        lab = outcomes[i]
        if lab not in P:
          raise MalformedStrategyError(f"outcome {lab!r} is not an outcome of step {i}")
      else:
        lab = max(P, key=lambda k: (P[k], -list(P).index(k)))
      step["outcome"] = lab
      node = node.children.get(lab)
    else:
      node = node.children.get(REJECTED)
    steps.append(step)
    i += 1
  verdict = compare(realized, root.budget) if root.exact else compare(pld_to_tradeoff(realized),
                                                                        root.budget)
  return Transcript(tuple(steps), realized, root.budget, verdict, tuple(warnings))
