"""Finite-support privacy loss distributions and their conversions.

A :class:`DiscretePLD` is a distribution over ``R u {+inf}`` of the privacy
loss ``log(dP/dQ)`` under ``P``. It converts exactly to the hockey-stick curve
``h(x) = E[(1 - x e^-Z)_+]`` and to the piecewise-linear tradeoff curve. All
three representations are interchangeable; composition is convolution on the
PLD side.
"""

from __future__ import annotations

import dataclasses
import json
import math
from functools import cached_property
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from privfilter import _tol
from privfilter.curves import TradeoffCurve, Violation, canonical
from privfilter.errors import InvalidCurveError, InvalidPLDError

INF_LABEL = "inf"
NEG_INF_LABEL = "-inf"


@dataclasses.dataclass(frozen=True, eq=False)
class DiscretePLD:
  """Finite-support privacy loss distribution.

  Attributes:
    atoms: ``(z, p)`` pairs sorted by ``z`` strictly increasing.
    inf_mass: probability of ``Z = +inf``.
  """
  atoms: Tuple[Tuple[float, float], ...]
  inf_mass: float = 0.0

  @cached_property
  def zs(self) -> np.ndarray:
    return np.array([z for z, _ in self.atoms], dtype=float)

  @cached_property
  def ps(self) -> np.ndarray:
    return np.array([p for _, p in self.atoms], dtype=float)

  @cached_property
  def exp_neg_moment(self) -> float:
    """``E[e^-Z]`` (the +inf atom contributes zero)."""
    return float(np.sum(self.ps * np.exp(-self.zs))) if self.atoms else 0.0

  @property
  def deficit(self) -> float:
    """``1 - E[e^-Z]``: the mass the Esscher partner puts on ``-inf``."""
    return max(1.0 - self.exp_neg_moment, 0.0)

  def key(self, resolution: float = _tol.Z_MERGE) -> tuple:
    """Hashable canonical key at the given resolution (for memo tables)."""
    q = lambda v: round(v / resolution)
    return (tuple((q(z), q(p)) for z, p in self.atoms), q(self.inf_mass))

  def __repr__(self):
    body = ", ".join(f"({z:.6g}, {p:.6g})" for z, p in self.atoms)
    return f"DiscretePLD([{body}], inf_mass={self.inf_mass:.6g})"


def make_pld(zs: Iterable[float], ps: Iterable[float], inf_mass: float = 0.0) -> DiscretePLD:
  """Builds a canonical PLD: sorted, near-equal atoms merged, tiny atoms folded.

  Atoms within ``Z_MERGE`` of each other are merged at their mass-weighted
  mean; atoms lighter than ``P_FLOOR`` are added to the nearest neighbour.
  """
  zs = np.asarray(list(zs), dtype=float)
  ps = np.asarray(list(ps), dtype=float)
  inf_mass = float(inf_mass)
  finite = np.isfinite(zs)
  inf_mass += float(np.sum(ps[~finite & (zs > 0)]))
  zs, ps = zs[finite], ps[finite]
  keep = ps > 0
  zs, ps = zs[keep], ps[keep]
  order = np.argsort(zs, kind="stable")
  zs, ps = zs[order], ps[order]
  mz: List[float] = []
  mp: List[float] = []
  for z, p in zip(zs, ps):
    if mz and z - mz[-1] <= _tol.Z_MERGE:
      tot = mp[-1] + p
      mz[-1] = (mz[-1] * mp[-1] + z * p) / tot
      mp[-1] = tot
    else:
      mz.append(float(z))
      mp.append(float(p))
  if len(mz) > 1:
    small = [i for i, p in enumerate(mp) if p < _tol.P_FLOOR]
    if len(small) < len(mz):
      for i in small:
        cands = [j for j in (i - 1, i + 1) if 0 <= j < len(mz) and mp[j] >= _tol.P_FLOOR]
        if not cands:
          cands = [j for j in range(len(mz)) if mp[j] >= _tol.P_FLOOR]
        j = min(cands, key=lambda j: abs(mz[j] - mz[i]))
        mp[j] += mp[i]
        mp[i] = 0.0
      mz = [z for z, p in zip(mz, mp) if p > 0]
      mp = [p for p in mp if p > 0]
  if inf_mass < _tol.P_FLOOR:
    inf_mass = 0.0
  return DiscretePLD(tuple(zip(mz, mp)), inf_mass)


def identity_pld() -> DiscretePLD:
  """``Id``: all mass at zero privacy loss."""
  return DiscretePLD(((0.0, 1.0),), 0.0)


def randomized_response_pld(eps: float) -> DiscretePLD:
  """PLD of binary randomized response at level ``eps``."""
  e = math.exp(eps)
  return make_pld([-eps, eps], [1.0 / (1.0 + e), e / (1.0 + e)])


def validate_pld(L: DiscretePLD) -> List[Violation]:
  """Lists every violated invariant of ``L``, including the validity bound
  ``E[e^-Z] <= 1``."""
  out: List[Violation] = []
  eps = _tol.EPS
  for i, (z, p) in enumerate(L.atoms):
    if not p > 0:
      out.append(Violation("probability-positive", i, f"mass {p} is not positive"))
    if not math.isfinite(z):
      out.append(Violation("finite-atom", i, f"atom location {z} is not finite"))
  if L.inf_mass < 0:
    out.append(Violation("probability-positive", None, f"inf_mass {L.inf_mass} < 0"))
  total = float(np.sum(L.ps)) + L.inf_mass
  if abs(total - 1.0) > eps:
    out.append(Violation("mass-sum", None, f"total mass {total}, not 1"))
  for i in range(1, len(L.atoms)):
    if L.atoms[i][0] <= L.atoms[i - 1][0]:
      out.append(Violation("sorted", i, "atoms not strictly increasing in z"))
  m = L.exp_neg_moment
  if m > 1 + eps:
    out.append(Violation("validity", None, f"E[e^-Z] = {m:.12g} exceeds 1"))
  return out


def check_pld(L: DiscretePLD) -> DiscretePLD:
  v = validate_pld(L)
  if v:
    raise InvalidPLDError("; ".join(f"{x.invariant}: {x.detail}" for x in v))
  return L


def esscher_pair(L: DiscretePLD) -> Tuple[Dict[str, float], Dict[str, float]]:
  """A testing pair ``(P, Q)`` with ``PLD(P || Q) = L``.

  ``P`` is ``L`` over outcome labels ``"0", "1", ...`` (one per finite atom in
  increasing ``z``) plus ``"inf"``; ``Q`` is the Esscher tilt ``e^-z p`` with the
  deficit ``1 - E[e^-Z]`` placed on the extra outcome ``"-inf"``.
  """
  check_pld(L)
  P: Dict[str, float] = {}
  Q: Dict[str, float] = {}
  for i, (z, p) in enumerate(L.atoms):
    P[str(i)] = p
    Q[str(i)] = p * math.exp(-z)
  if L.inf_mass > 0:
    P[INF_LABEL] = L.inf_mass
    Q[INF_LABEL] = 0.0
  if L.deficit > 1e-12:
    P[NEG_INF_LABEL] = 0.0
    Q[NEG_INF_LABEL] = L.deficit
  return P, Q


def convolve(L1: DiscretePLD, L2: DiscretePLD) -> DiscretePLD:
  """``L1 (+) L2``: the PLD of the product testing problem."""
  if not L1.atoms or not L2.atoms:
    zs, ps = [], []
  else:
    zs = np.add.outer(L1.zs, L2.zs).ravel()
    ps = np.multiply.outer(L1.ps, L2.ps).ravel()
  inf_mass = 1.0 - (1.0 - L1.inf_mass) * (1.0 - L2.inf_mass)
  return make_pld(zs, ps, inf_mass)


def convolve_all(plds: Sequence[DiscretePLD]) -> DiscretePLD:
  out = identity_pld()
  for L in plds:
    out = convolve(out, L)
  return out


@dataclasses.dataclass(frozen=True, eq=False)
class HockeyStickCurve:
  """Convex, decreasing, piecewise-linear hockey-stick curve on (0, inf).

  Attributes:
    bends: ``(x, value)`` pairs at the points where the slope changes.
    initial_slope: slope on ``(0, first bend)``; the curve starts at 1.
    terminal_value: value beyond the last bend (slope 0 there).
    slopes: slope to the right of each bend. Kept so that conversions back to
      a PLD do not difference nearly-equal values.
  """
  bends: Tuple[Tuple[float, float], ...]
  initial_slope: float
  terminal_value: float
  slopes: Tuple[float, ...] = ()

  @cached_property
  def xs(self) -> np.ndarray:
    return np.array([x for x, _ in self.bends], dtype=float)

  @cached_property
  def vals(self) -> np.ndarray:
    return np.array([v for _, v in self.bends], dtype=float)

  @cached_property
  def right_slopes(self) -> np.ndarray:
    if self.slopes:
      return np.array(self.slopes, dtype=float)
    n = len(self.bends)
    out = np.zeros(n)
    if n > 1:
      out[:-1] = np.diff(self.vals) / np.diff(self.xs)
    return out

  def __call__(self, x):
    return eval_hockey(self, x)

  def hockey(self, x):
    return eval_hockey(self, x)


def eval_hockey(h: HockeyStickCurve, x):
  """Evaluates ``h`` at ``x > 0`` (scalar or array)."""
  x = np.asarray(x, dtype=float)
  if not h.bends:
    out = 1.0 + h.initial_slope * x
  else:
    idx = np.searchsorted(h.xs, x, side="right")
    left = np.maximum(idx - 1, 0)
    after = h.vals[left] + h.right_slopes[left] * (x - h.xs[left])
    out = np.where(idx == 0, 1.0 + h.initial_slope * x, after)
  out = np.clip(out, 0.0, 1.0)
  return float(out) if out.ndim == 0 else out


def pld_to_hockey(L: DiscretePLD) -> HockeyStickCurve:
  """``h(x) = inf_mass + sum_i p_i (1 - x e^-z_i)_+``, one bend per finite atom."""
  if not L.atoms:
    return HockeyStickCurve((), 0.0, L.inf_mass, ())
  zs, ps = L.zs, L.ps
  w = ps * np.exp(-zs)
  # Mass and tilted mass strictly to the right of each atom.
  suf_p = np.concatenate([np.cumsum(ps[::-1])[::-1][1:], [0.0]])
  suf_w = np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])
  xs = np.exp(zs)
  vals = L.inf_mass + suf_p - xs * suf_w
  return HockeyStickCurve(
      tuple(zip(xs.tolist(), vals.tolist())),
      -float(np.sum(w)),
      float(L.inf_mass),
      tuple((-suf_w).tolist()))


def hockey_to_pld(h: HockeyStickCurve) -> DiscretePLD:
  """Inverts :func:`pld_to_hockey`: a bend at ``x`` with slope increase ``ds``
  becomes the atom ``(log x, ds * x)``."""
  left = np.concatenate([[h.initial_slope], h.right_slopes[:-1]]) if h.bends else np.array([])
  ds = h.right_slopes - left if h.bends else np.array([])
  if np.any(ds < -_tol.EPS):
    raise InvalidCurveError("hockey-stick curve is not convex")
  xs = h.xs
  return make_pld(np.log(xs), np.maximum(ds, 0.0) * xs, h.terminal_value)


def validate_hockey(h: HockeyStickCurve) -> List[Violation]:
  out: List[Violation] = []
  eps = _tol.EPS
  if h.initial_slope > eps:
    out.append(Violation("decreasing", None, "initial slope is positive"))
  prev = h.initial_slope
  for i, s in enumerate(h.right_slopes):
    if s < prev - eps:
      out.append(Violation("convex", i, f"slope decreases at bend {i}"))
    prev = s
  if h.bends and abs(h.right_slopes[-1]) > eps:
    out.append(Violation("terminal-flat", len(h.bends) - 1, "slope after last bend is not 0"))
  if h.bends and abs(h.vals[-1] - h.terminal_value) > eps:
    out.append(Violation("terminal-value", len(h.bends) - 1, "terminal value mismatch"))
  if h.bends and np.any(np.diff(h.xs) <= 0):
    out.append(Violation("sorted", None, "bends not strictly increasing"))
  if h.bends and np.any(h.vals < 1.0 - h.xs - eps):
    out.append(Violation("above-identity", None, "h(x) < 1 - x at some bend"))
  return out


def pld_to_tradeoff(L: DiscretePLD) -> TradeoffCurve:
  """Tradeoff curve of ``L``.

  Tests reject the lowest-loss outcomes first: atom ``(z, p)`` becomes a
  segment of width ``p`` and slope ``-e^-z`` (increasing ``z`` is steepest
  first), the ``+inf`` atom a flat terminal segment, and the Esscher deficit
  ``1 - E[e^-Z]`` becomes ``delta``.
  """
  segs = [(p, -math.exp(-z)) for z, p in L.atoms]
  if L.inf_mass > 0:
    segs.append((L.inf_mass, 0.0))
  return canonical(segs, L.deficit)


def tradeoff_to_hockey(f: TradeoffCurve) -> HockeyStickCurve:
  """``h(x) = sup_a 1 - a - x f(a)``, attained at breakpoints of ``f``.

  The segment with slope ``s < 0`` produces a bend at ``x = -1/s``.
  """
  bp, vals = f.breakpoints, f.values
  bends = []
  slopes = []
  for i, (w, s) in enumerate(f.segments):
    if s >= 0:
      continue
    x = -1.0 / s
    a_end, v_end = bp[i + 1], vals[i + 1]
    bends.append((x, 1.0 - a_end - x * max(v_end, 0.0)))
    slopes.append(-max(v_end, 0.0))
  nz = [s for _, s in f.segments if s < 0]
  a_last = bp[len(nz)] if nz else 0.0
  terminal = 1.0 - a_last if nz else 1.0
  if slopes:
    slopes[-1] = 0.0
  return HockeyStickCurve(tuple(bends), -(1.0 - f.delta), float(terminal), tuple(slopes))


def tradeoff_to_pld(f: TradeoffCurve) -> DiscretePLD:
  """PLD of a piecewise-linear tradeoff curve (via its hockey-stick curve)."""
  return hockey_to_pld(tradeoff_to_hockey(f))


def as_pld(obj) -> DiscretePLD:
  """Coerces a PLD, tradeoff curve or hockey-stick curve to a PLD."""
  if isinstance(obj, DiscretePLD):
    return obj
  if isinstance(obj, TradeoffCurve):
    return tradeoff_to_pld(obj)
  if isinstance(obj, HockeyStickCurve):
    return hockey_to_pld(obj)
  raise TypeError(f"cannot convert {type(obj).__name__} to a DiscretePLD")


def as_hockey(obj) -> HockeyStickCurve:
  if isinstance(obj, HockeyStickCurve):
    return obj
  if isinstance(obj, TradeoffCurve):
    return tradeoff_to_hockey(obj)
  if isinstance(obj, DiscretePLD):
    return pld_to_hockey(obj)
  raise TypeError(f"cannot convert {type(obj).__name__} to a HockeyStickCurve")


def as_tradeoff(obj) -> TradeoffCurve:
  if isinstance(obj, TradeoffCurve):
    return obj
  return pld_to_tradeoff(as_pld(obj))


# -- serialization -----------------------------------------------------------

def fmt_float(v: float) -> str:
  """17 significant digits; non-finite values as JSON-compatible strings."""
  v = float(v)
  if math.isnan(v):
    return '"NaN"'
  if math.isinf(v):
    return '"Infinity"' if v > 0 else '"-Infinity"'
  return format(v, ".17g")


def dumps(obj, indent: int = 0, _level: int = 0) -> str:
  """Minimal JSON writer that renders floats with 17 significant digits."""
  nl = "\n" if indent else ""
  pad = " " * (indent * (_level + 1)) if indent else ""
  end = " " * (indent * _level) if indent else ""
  sep = "," + nl if indent else ", "
  if isinstance(obj, bool) or obj is None:
    return json.dumps(obj)
  if isinstance(obj, (int, np.integer)):
    return str(int(obj))
  if isinstance(obj, (float, np.floating)):
    return fmt_float(obj)
  if isinstance(obj, str):
    return json.dumps(obj, ensure_ascii=False)
  if isinstance(obj, dict):
    if not obj:
      return "{}"
    items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, _level + 1)}"
             for k, v in obj.items()]
    return "{" + nl + sep.join(items) + nl + end + "}"
  if isinstance(obj, (list, tuple, np.ndarray)):
    seq = list(obj)
    if not seq:
      return "[]"
    if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
      return "[" + ", ".join(dumps(v) for v in seq) + "]"
    items = [pad + dumps(v, indent, _level + 1) for v in seq]
    return "[" + nl + sep.join(items) + nl + end + "]"
  if hasattr(obj, "to_json"):
    return dumps(obj.to_json(), indent, _level)
  raise TypeError(f"cannot serialize {type(obj).__name__}")


def pld_to_json(L: DiscretePLD) -> dict:
  return {"atoms": [[z, p] for z, p in L.atoms], "inf_mass": L.inf_mass}


def pld_from_json(d: dict) -> DiscretePLD:
  try:
    atoms = d["atoms"]
    return make_pld([float(a[0]) for a in atoms], [float(a[1]) for a in atoms],
                    float(d.get("inf_mass", 0.0)))
  except (KeyError, TypeError, IndexError, ValueError) as exc:
    raise InvalidPLDError(f"malformed PLD JSON: {exc}") from exc


def tradeoff_to_json(f: TradeoffCurve) -> dict:
  return {"segments": [[w, s] for w, s in f.segments], "delta": f.delta}


def tradeoff_from_json(d: dict) -> TradeoffCurve:
  try:
    segs = [(float(w), float(s)) for w, s in d["segments"]]
    return TradeoffCurve(tuple(segs), float(d.get("delta", 0.0)))
  except (KeyError, TypeError, ValueError) as exc:
    raise InvalidCurveError(f"malformed tradeoff JSON: {exc}") from exc
