"""Composition of privacy curves.

Piecewise-linear curves compose exactly through a product table over their
segments. Gaussian curves compose in closed form. Anything mixing the two is
carried as a *curve handle*: an object with a vectorised ``hockey(x)`` method,
built from the hockey-stick composition identity
``h_{A (x) B}(x) = E_{Z ~ PLD(A)}[h_B(x e^-Z)]``, from which tradeoff values are
recovered by supporting lines.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Union

import numpy as np
from scipy import optimize, special

from privfilter.curves import (GaussianTradeoff, TradeoffCurve, canonical, check_tradeoff,
                               eval_tradeoff)
from privfilter.errors import DomainError
from privfilter.pld import (DiscretePLD, HockeyStickCurve, convolve, eval_hockey,
                            pld_to_tradeoff, tradeoff_to_hockey, tradeoff_to_pld)

# Log-grid used for analytic curves: x in [e^-30, e^30].
LOG_X_GRID = np.linspace(-30.0, 30.0, 6001)

# Absolute rounding error of ``1 - alpha - h(x)``; dividing by ``x`` magnifies it,
# so every supporting line is lowered by ``ROUNDING / x``.
ROUNDING = 2 * np.finfo(float).eps


def compose_piecewise(f1: TradeoffCurve, f2: TradeoffCurve) -> TradeoffCurve:
  """Exact ``f1 (x) f2`` for piecewise-linear tradeoff curves.

  Every pair of segments contributes width ``w1 * w2`` and slope
  ``-|s1| |s2|``; the table is sorted steepest first and equal slopes merged.
  Flat segments take part in the table, which yields
  ``delta = d1 + d2 - d1 d2``.
  """
  check_tradeoff(f1)
  check_tradeoff(f2)
  w = np.multiply.outer(f1.widths, f2.widths).ravel()
  s = -np.multiply.outer(np.abs(f1.slopes), np.abs(f2.slopes)).ravel()
  delta = f1.delta + f2.delta - f1.delta * f2.delta
  return canonical(list(zip(w.tolist(), s.tolist())), delta)


def compose_gaussian(g1: GaussianTradeoff, g2: GaussianTradeoff) -> GaussianTradeoff:
  """``G_m1 (x) G_m2 = G_sqrt(m1^2 + m2^2)``."""
  if g1.mu < 0 or g2.mu < 0:
    raise DomainError("mu must be non-negative")
  return GaussianTradeoff(math.hypot(g1.mu, g2.mu))


def compose_pld_check(f1: TradeoffCurve, f2: TradeoffCurve) -> TradeoffCurve:
  """Second route to ``f1 (x) f2``: convolve the PLDs and convert back."""
  return pld_to_tradeoff(convolve(tradeoff_to_pld(f1), tradeoff_to_pld(f2)))


# -- curve handles -----------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PiecewiseHandle:
  """Wraps an exact piecewise-linear curve as a handle."""
  curve: TradeoffCurve

  def hockey(self, x):
    return eval_hockey(tradeoff_to_hockey(self.curve), x)


@dataclasses.dataclass(frozen=True)
class DeltaShifted:
  """``f_{0,delta} (x) inner``: hockey-stick ``delta + (1 - delta) h(x)``."""
  delta: float
  inner: object

  def hockey(self, x):
    return self.delta + (1.0 - self.delta) * np.asarray(self.inner.hockey(x))


@dataclasses.dataclass(frozen=True)
class PLDComposed:
  """``pld (+) inner`` for a finite PLD: ``m_inf + sum_i p_i h(x e^-z_i)``."""
  pld: DiscretePLD
  inner: object

  def hockey(self, x):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, self.pld.inf_mass)
    for z, p in self.pld.atoms:
      out = out + p * np.asarray(self.inner.hockey(x * math.exp(-z)))
    return out


@dataclasses.dataclass(frozen=True)
class GaussianComposed:
  """``G_mu (x) inner`` by Gauss-Hermite quadrature over the Gaussian PLD.

  The PLD of ``G_mu`` is ``N(mu^2 / 2, mu^2)``.
  """
  mu: float
  inner: object
  nodes: int = 160

  def hockey(self, x):
    x = np.asarray(x, dtype=float)
    if self.mu == 0:
      return np.asarray(self.inner.hockey(x))
    t, w = special.roots_hermitenorm(self.nodes)
    w = w / w.sum()
    z = self.mu ** 2 / 2 + self.mu * t
    vals = np.asarray(self.inner.hockey(np.multiply.outer(x, np.exp(-z))))
    return vals @ w


Curve = Union[TradeoffCurve, GaussianTradeoff, PiecewiseHandle, DeltaShifted, PLDComposed,
              GaussianComposed, HockeyStickCurve]


def approx_gaussian(mu: float, delta: float) -> DeltaShifted:
  """Approximate-GDP curve ``f_{0,delta} (x) G_mu``."""
  if not 0 <= delta <= 1:
    raise DomainError(f"delta must lie in [0, 1], got {delta}")
  return DeltaShifted(delta, GaussianTradeoff(mu))


def compose_delta_with_hockey(delta: float, h):
  """``f_{0,delta}`` composed with a curve given by its hockey-stick.

  Returns an exact :class:`HockeyStickCurve` for piecewise-linear input and a
  :class:`DeltaShifted` handle otherwise.
  """
  if not 0 <= delta <= 1:
    raise DomainError(f"delta must lie in [0, 1], got {delta}")
  if delta == 0:
    return h
  if isinstance(h, HockeyStickCurve):
    scale = 1.0 - delta
    return HockeyStickCurve(
        tuple((x, delta + scale * v) for x, v in h.bends),
        scale * h.initial_slope,
        delta + scale * h.terminal_value,
        tuple(scale * s for s in h.right_slopes))
  if isinstance(h, DeltaShifted):
    return DeltaShifted(delta + h.delta - delta * h.delta, h.inner)
  return DeltaShifted(delta, h)


def hockey_of(curve):
  """Callable ``x -> h(x)`` for any supported curve object."""
  if isinstance(curve, TradeoffCurve):
    h = tradeoff_to_hockey(curve)
    return lambda x: eval_hockey(h, x)
  if isinstance(curve, DiscretePLD):
    from privfilter.pld import pld_to_hockey
    h = pld_to_hockey(curve)
    return lambda x: eval_hockey(h, x)
  if isinstance(curve, HockeyStickCurve):
    return lambda x: eval_hockey(curve, x)
  return curve.hockey


def _as_inner(curve):
  if isinstance(curve, TradeoffCurve):
    return PiecewiseHandle(curve)
  if isinstance(curve, HockeyStickCurve):
    return curve
  return curve


def compose_curves(a, b):
  """Composes two curves, exactly whenever a closed form exists.

  Piecewise (x) piecewise and Gaussian (x) Gaussian are exact; approximate-GDP
  handles compose in closed form; other mixes return a numeric handle.
  """
  if isinstance(a, TradeoffCurve) and isinstance(b, TradeoffCurve):
    return compose_piecewise(a, b)
  if isinstance(a, GaussianTradeoff) and isinstance(b, GaussianTradeoff):
    return compose_gaussian(a, b)
  ga, gb = _gaussian_parts(a), _gaussian_parts(b)
  if ga is not None and gb is not None:
    (d1, m1), (d2, m2) = ga, gb
    return _approx_gaussian_or_plain(math.hypot(m1, m2), d1 + d2 - d1 * d2)
  if isinstance(a, TradeoffCurve):
    a, b = b, a
  if isinstance(b, TradeoffCurve):
    if isinstance(a, DeltaShifted):
      return DeltaShifted(a.delta, PLDComposed(tradeoff_to_pld(b), a.inner))
    return PLDComposed(tradeoff_to_pld(b), _as_inner(a))
  if isinstance(a, GaussianTradeoff):
    return GaussianComposed(a.mu, _as_inner(b))
  if isinstance(b, GaussianTradeoff):
    return GaussianComposed(b.mu, _as_inner(a))
  if isinstance(a, DeltaShifted):
    return DeltaShifted(a.delta, compose_curves(a.inner, b))
  if isinstance(b, DeltaShifted):
    return DeltaShifted(b.delta, compose_curves(a, b.inner))
  raise TypeError(f"cannot compose {type(a).__name__} with {type(b).__name__}")


def _gaussian_parts(c):
  if isinstance(c, GaussianTradeoff):
    return 0.0, c.mu
  if isinstance(c, DeltaShifted) and isinstance(c.inner, GaussianTradeoff):
    return c.delta, c.inner.mu
  return None


def _approx_gaussian_or_plain(mu, delta):
  g = GaussianTradeoff(mu)
  return g if delta == 0 else DeltaShifted(delta, g)


def is_exact(curve) -> bool:
  return isinstance(curve, (TradeoffCurve, DiscretePLD, HockeyStickCurve))


def is_analytic(curve) -> bool:
  return not is_exact(curve)


# -- tradeoff recovery from hockey-stick curves ------------------------------

def _support_line_value(hfun, alpha, t):
  x = np.exp(t)
  return (1.0 - alpha - hfun(x) - ROUNDING) / x


def eval_analytic_tradeoff(handle, alpha, refine: bool = True):
  """Tradeoff value ``tau(alpha) = max(0, sup_x (1 - alpha - h(x)) / x)``.

  The supremum of supporting lines runs over ``LOG_X_GRID`` and is refined by
  bounded scalar maximisation between the neighbours of the best grid point.
  Lines are lowered by their rounding error so tiny ``x`` cannot win on noise.
  Piecewise-linear inputs are evaluated exactly.
  """
  if isinstance(handle, TradeoffCurve):
    return eval_tradeoff(handle, alpha)
  if isinstance(handle, PiecewiseHandle):
    return eval_tradeoff(handle.curve, alpha)
  hfun = hockey_of(handle)
  a = np.atleast_1d(np.asarray(alpha, dtype=float))
  if np.any(a < 0) or np.any(a > 1):
    raise DomainError("alpha must lie in [0, 1]")
  x = np.exp(LOG_X_GRID)
  hx = np.asarray(hfun(x))
  vals = (1.0 - a[:, None] - hx[None, :] - ROUNDING) / x[None, :]
  best = np.argmax(vals, axis=1)
  out = vals[np.arange(len(a)), best]
  if refine:
    for i, k in enumerate(best):
      lo = LOG_X_GRID[max(k - 1, 0)]
      hi = LOG_X_GRID[min(k + 1, len(LOG_X_GRID) - 1)]
      if hi <= lo:
        continue
      res = optimize.minimize_scalar(
          lambda t: -float(_support_line_value(hfun, a[i], t)),
          bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
      out[i] = max(out[i], -res.fun)
  out = np.clip(out, 0.0, 1.0 - a)
  return float(out[0]) if np.ndim(alpha) == 0 else out


def tradeoff_values(curve, alpha):
  """Tradeoff values of any supported curve (exact where possible)."""
  if isinstance(curve, GaussianTradeoff):
    from privfilter.curves import eval_gaussian
    return eval_gaussian(curve, alpha)
  if isinstance(curve, DeltaShifted) and isinstance(curve.inner, GaussianTradeoff):
    a = np.asarray(alpha, dtype=float)
    scale = 1.0 - curve.delta
    if scale <= 0:
      out = np.zeros_like(a)
    else:
      from privfilter.curves import eval_gaussian
      inner = eval_gaussian(curve.inner, np.clip(a / scale, 0.0, 1.0))
      out = np.where(a <= scale, scale * inner, 0.0)
    return float(out) if out.ndim == 0 else out
  if isinstance(curve, DiscretePLD):
    return eval_tradeoff(pld_to_tradeoff(curve), alpha)
  return eval_analytic_tradeoff(curve, alpha)
