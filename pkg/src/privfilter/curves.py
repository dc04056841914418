"""Tradeoff curves: piecewise-linear (all (eps, delta)-DP curves) and Gaussian.

A piecewise-linear tradeoff curve is stored as a list of ``(width, slope)``
segments ordered steepest first, together with ``delta = 1 - f(0)``. The
breakpoints are derived from cumulative widths. This is the representation in
which exact composition is a product table over segments.
"""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from privfilter import _tol
from privfilter.errors import DomainError, InvalidCurveError


@dataclasses.dataclass(frozen=True, eq=False)
class TradeoffCurve:
  """Piecewise-linear Type-I/Type-II error tradeoff curve on [0, 1].

  Attributes:
    segments: tuple of ``(width, slope)`` pairs, steepest slope first. Widths
      sum to one; slopes are non-positive.
    delta: ``1 - f(0)``.
  """
  segments: Tuple[Tuple[float, float], ...]
  delta: float

  @cached_property
  def widths(self) -> np.ndarray:
    return np.array([w for w, _ in self.segments], dtype=float)

  @cached_property
  def slopes(self) -> np.ndarray:
    return np.array([s for _, s in self.segments], dtype=float)

  @cached_property
  def breakpoints(self) -> np.ndarray:
    """Alpha coordinates of segment endpoints, starting at 0."""
    bp = np.concatenate([[0.0], np.cumsum(self.widths)])
    if abs(bp[-1] - 1.0) <= _tol.EPS:
      bp = np.minimum(bp, 1.0)
      bp[-1] = 1.0
    return bp

  @cached_property
  def values(self) -> np.ndarray:
    """Curve values at ``breakpoints``."""
    return np.concatenate(
        [[1.0 - self.delta], 1.0 - self.delta + np.cumsum(self.widths * self.slopes)])

  def __call__(self, alpha):
    return eval_tradeoff(self, alpha)

  def __repr__(self):
    segs = ", ".join(f"({w:.6g}, {s:.6g})" for w, s in self.segments)
    return f"TradeoffCurve([{segs}], delta={self.delta:.6g})"


@dataclasses.dataclass(frozen=True)
class GaussianTradeoff:
  """Tradeoff curve ``G_mu`` of testing N(0, 1) against N(mu, 1)."""
  mu: float

  def __post_init__(self):
    if not (self.mu >= 0 and math.isfinite(self.mu)):
      raise DomainError(f"mu must be a finite non-negative real, got {self.mu}")

  def __call__(self, alpha):
    return eval_gaussian(self, alpha)

  def hockey(self, x):
    """Hockey-stick curve ``H_x(N(mu,1) || N(0,1))`` evaluated at ``x > 0``."""
    return gaussian_hockey(self.mu, x)


@dataclasses.dataclass(frozen=True)
class Violation:
  """A single failed invariant reported by a validator."""
  invariant: str
  index: Optional[int]
  detail: str


def canonical(segments: Sequence[Tuple[float, float]], delta: float) -> TradeoffCurve:
  """Builds a canonical curve: sorted steepest first, empty segments dropped,
  adjacent slopes within ``EPS`` merged (width-weighted so ``f(1)`` is kept)."""
  segs = [(float(w), float(s)) for w, s in segments if w > 0]
  segs.sort(key=lambda ws: ws[1])
  merged: List[List[float]] = []
  for w, s in segs:
    if merged and abs(merged[-1][1] - s) < _tol.EPS:
      w0, s0 = merged[-1]
      merged[-1] = [w0 + w, (w0 * s0 + w * s) / (w0 + w)]
    else:
      merged.append([w, s])
  out = []
  for w, s in merged:
    # -0.0 and tiny positive noise both become an exact flat segment.
    out.append((w, 0.0 if s > -_tol.EPS * 1e-3 else s))
  return TradeoffCurve(tuple(out), float(min(max(delta, 0.0), 1.0)))


def make_approx_dp(eps: float, delta: float) -> TradeoffCurve:
  """Tradeoff curve ``f_{eps,delta}`` of an (eps, delta)-DP mechanism.

  ``max{0, 1 - delta - e^eps a, e^-eps (1 - delta - a)}`` in segment form.
  """
  if not (eps >= 0 and math.isfinite(eps)):
    raise DomainError(f"eps must be finite and >= 0, got {eps}")
  if not 0 <= delta <= 1:
    raise DomainError(f"delta must lie in [0, 1], got {delta}")
  e = math.exp(eps)
  a_star = (1.0 - delta) / (1.0 + e)
  return canonical(
      [(a_star, -e), ((1.0 - delta) - a_star, -1.0 / e), (delta, 0.0)], delta)


def make_pure_delta(delta: float) -> TradeoffCurve:
  """Tradeoff curve ``f_{0,delta}``."""
  if not 0 <= delta <= 1:
    raise DomainError(f"delta must lie in [0, 1], got {delta}")
  return make_approx_dp(0.0, delta)


def identity_curve() -> TradeoffCurve:
  """``f_id(a) = 1 - a`` (perfect privacy)."""
  return TradeoffCurve(((1.0, -1.0),), 0.0)


def eval_tradeoff(f: TradeoffCurve, alpha):
  """Evaluates ``f`` at ``alpha`` (scalar or array) in [0, 1]."""
  a = np.asarray(alpha, dtype=float)
  if np.any(a < -_tol.EPS) or np.any(a > 1 + _tol.EPS):
    raise DomainError("alpha must lie in [0, 1]")
  a = np.clip(a, 0.0, 1.0)
  out = np.maximum(np.interp(a, f.breakpoints, f.values), 0.0)
  return float(out) if out.ndim == 0 else out


def norm_ppf_upper(alpha):
  """``Phi^{-1}(1 - alpha)`` computed without cancellation."""
  return norm.isf(alpha)


def eval_gaussian(g: GaussianTradeoff, alpha):
  """``G_mu(a) = Phi(Phi^{-1}(1 - a) - mu)``, with limits 1 at 0 and 0 at 1."""
  a = np.asarray(alpha, dtype=float)
  if np.any(a < 0) or np.any(a > 1):
    raise DomainError("alpha must lie in [0, 1]")
  out = norm.sf(g.mu - norm.isf(a))
  return float(out) if np.ndim(out) == 0 else out


def gaussian_hockey(mu: float, x):
  """Closed-form hockey-stick curve of ``G_mu``.

  ``h(e^e) = Phi(-e/mu + mu/2) - e^e Phi(-e/mu - mu/2)``; ``(1 - x)_+`` at mu=0.
  """
  x = np.asarray(x, dtype=float)
  if mu == 0:
    out = np.maximum(1.0 - x, 0.0)
  else:
    with np.errstate(divide="ignore"):
      le = np.log(x)
    out = norm.cdf(-le / mu + mu / 2) - x * norm.cdf(-le / mu - mu / 2)
    out = np.clip(out, 0.0, 1.0)
  return float(out) if out.ndim == 0 else out


def validate_tradeoff(f: TradeoffCurve) -> List[Violation]:
  """Lists every violated invariant of a piecewise-linear tradeoff curve."""
  out: List[Violation] = []
  eps = _tol.EPS
  if not -eps <= f.delta <= 1 + eps:
    out.append(Violation("delta-range", None, f"delta={f.delta} not in [0, 1]"))
  if not f.segments:
    out.append(Violation("width-sum", None, "no segments"))
    return out
  for i, (w, s) in enumerate(f.segments):
    if not w > 0:
      out.append(Violation("width-positive", i, f"width {w} is not positive"))
    if s > eps:
      out.append(Violation("slope-sign", i, f"slope {s} is positive"))
  total = float(np.sum(f.widths))
  if abs(total - 1.0) > eps:
    out.append(Violation("width-sum", None, f"widths sum to {total}, not 1"))
  for i in range(1, len(f.segments)):
    s_prev, s = f.segments[i - 1][1], f.segments[i][1]
    if s < s_prev - eps:
      out.append(Violation(
          "slope-order", i, f"slope {s} steeper than preceding {s_prev} (non-convex)"))
    elif abs(s - s_prev) < eps:
      out.append(Violation("canonical", i, f"slope {s} repeats preceding segment"))
  end = (1.0 - f.delta) + float(np.sum(f.widths * f.slopes))
  if abs(end) > eps:
    out.append(Violation("terminal-value", len(f.segments) - 1, f"f(1) = {end}, not 0"))
  excess = f.values - (1.0 - f.breakpoints)
  bad = np.nonzero(excess > eps)[0]
  if bad.size:
    i = int(bad[0])
    out.append(Violation("below-identity", max(i - 1, 0),
                         f"f({f.breakpoints[i]:.6g}) exceeds 1 - alpha by {excess[i]:.3g}"))
  return out


def check_tradeoff(f: TradeoffCurve) -> TradeoffCurve:
  """Returns ``f`` or raises :class:`InvalidCurveError` listing violations."""
  v = validate_tradeoff(f)
  if v:
    raise InvalidCurveError("; ".join(f"{x.invariant}: {x.detail}" for x in v))
  return f


def symmetric_fixed_point(f: TradeoffCurve) -> float:
  """The unique ``alpha`` with ``f(alpha) = alpha``."""
  bp, vals = f.breakpoints, f.values
  g = vals - bp
  for i in range(len(f.segments)):
    if g[i] >= 0 >= g[i + 1]:
      if g[i] == g[i + 1]:
        return float(bp[i])
      # f - id is linear on the segment with slope (s - 1).
      return float(bp[i] + g[i] / (1.0 - f.segments[i][1]))
  return float(bp[-1])


def eps_delta_of(f: TradeoffCurve) -> Tuple[float, float]:
  """Recovers ``(eps, delta)`` from a curve built by :func:`make_approx_dp`."""
  steep = -f.segments[0][1]
  if steep <= 0:
    return 0.0, f.delta
  return max(math.log(steep), 0.0), f.delta
