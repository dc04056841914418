"""Command-line front end.

Exit codes are stable: 0 success or property holds, 1 property fails, 2 input
error, 3 analytic and piecewise curves mixed without ``--grid``, 4 enumeration
guard exceeded, 5 counter-example search failed.

Curve specs: ``approx:EPS,DELTA``, ``gdp:MU``, ``agdp:MU,DELTA``, ``delta:D``,
``id``, ``file:PATH`` or ``json:{...}`` (a bare JSON object also works). JSON
objects carry ``segments``/``delta`` (tradeoff curve), ``atoms``/``inf_mass``
(PLD) or ``mu`` with optional ``delta`` (Gaussian).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from privfilter.compose import (DeltaShifted, _gaussian_parts, approx_gaussian, compose_curves,
                                compose_piecewise, is_exact, tradeoff_values)
from privfilter.curves import (GaussianTradeoff, TradeoffCurve, canonical, check_tradeoff,
                               identity_curve, make_approx_dp, make_pure_delta)
from privfilter.errors import (CurveSpecError, EnumerationGuardError, MalformedStrategyError,
                               PrivFilterError, SearchFailure)
from privfilter.filter import StrategyTree, corollary_budget, is_free, run_session
from privfilter.order import (CROSSING, check_commutativity, check_well_ordered, compare,
                              compare_analytic, envelope_tradeoff)
from privfilter.pld import (DiscretePLD, as_pld, check_pld, dumps, pld_from_json, pld_to_json,
                            pld_to_tradeoff, tradeoff_from_json, tradeoff_to_json)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_MIXED, EXIT_GUARD, EXIT_SEARCH = 0, 1, 2, 3, 4, 5
GRID_POINTS = 1001


# -- curve specs ---------------------------------------------------------------

def _floats(body: str, n: int, kind: str) -> List[float]:
  parts = [p.strip() for p in body.split(",")] if body else []
  if len(parts) != n:
    raise CurveSpecError(f"{kind}: expected {n} number(s), got {body!r}")
  try:
    vals = [float(p) for p in parts]
  except ValueError as exc:
    raise CurveSpecError(f"{kind}: {exc}") from exc
  if not all(math.isfinite(v) for v in vals):
    raise CurveSpecError(f"{kind}: values must be finite")
  return vals


def curve_from_json(d) -> object:
  """Builds a curve object from a parsed JSON object."""
  if not isinstance(d, dict):
    raise CurveSpecError("curve JSON must be an object")
  if "segments" in d:
    return check_tradeoff(tradeoff_from_json(d))
  if "atoms" in d:
    return check_pld(pld_from_json(d))
  if "mu" in d:
    mu, delta = float(d["mu"]), float(d.get("delta", 0.0))
    return GaussianTradeoff(mu) if delta == 0 else approx_gaussian(mu, delta)
  raise CurveSpecError("curve JSON needs 'segments', 'atoms' or 'mu'")


def parse_curve(spec: str):
  """Parses a command-line curve spec into a curve object.

  Raises:
    CurveSpecError: unreadable spec.
  """
  spec = spec.strip()
  kind, _, body = spec.partition(":")
  try:
    if spec == "id":
      return identity_curve()
    if spec.startswith("{"):
      return curve_from_json(json.loads(spec))
    if kind == "approx":
      return make_approx_dp(*_floats(body, 2, kind))
    if kind == "gdp":
      return GaussianTradeoff(*_floats(body, 1, kind))
    if kind == "agdp":
      mu, delta = _floats(body, 2, kind)
      return approx_gaussian(mu, delta)
    if kind == "delta":
      return make_pure_delta(*_floats(body, 1, kind))
    if kind == "json":
      return curve_from_json(json.loads(body))
    if kind == "file":
      with open(body, encoding="utf-8") as fh:
        return curve_from_json(json.load(fh))
  except CurveSpecError:
    raise
  except (OSError, json.JSONDecodeError, PrivFilterError, ValueError, TypeError) as exc:
    raise CurveSpecError(f"{spec!r}: {exc}") from exc
  raise CurveSpecError(f"unknown curve spec {spec!r}")


def curve_to_json(c) -> dict:
  if isinstance(c, TradeoffCurve):
    return tradeoff_to_json(c)
  if isinstance(c, DiscretePLD):
    return pld_to_json(c)
  if isinstance(c, GaussianTradeoff):
    return {"mu": c.mu}
  if isinstance(c, DeltaShifted) and isinstance(c.inner, GaussianTradeoff):
    return {"mu": c.inner.mu, "delta": c.delta}
  raise TypeError(f"no JSON form for {type(c).__name__}")


def _as_piecewise(c) -> TradeoffCurve:
  return pld_to_tradeoff(c) if isinstance(c, DiscretePLD) else c


def sampled_curve(curve, n: int = GRID_POINTS) -> TradeoffCurve:
  """Piecewise-linear interpolation of ``curve`` on an ``n``-point alpha grid.

  Chords of a convex curve lie above it and below ``1 - alpha``, so the result
  is a valid tradeoff curve, slightly more private than the original.
  """
  a = np.linspace(0.0, 1.0, n)
  v = np.asarray(tradeoff_values(curve, a), dtype=float)
  v[-1] = 0.0
  v = np.minimum.accumulate(np.minimum(v, 1.0 - a))
  return canonical(list(zip(np.diff(a).tolist(), (np.diff(v) / np.diff(a)).tolist())),
                   1.0 - float(v[0]))


def _write(text: str, path: Optional[str]):
  if path:
    with open(path, "w", encoding="utf-8") as fh:
      fh.write(text + "\n")
  else:
    print(text)


def _report(obj) -> None:
  print(dumps(obj, indent=2))


# -- commands ------------------------------------------------------------------

def cmd_compose(args) -> int:
  curves = [parse_curve(s) for s in args.curves]
  if all(is_exact(c) for c in curves):
    out = _as_piecewise(curves[0])
    for c in curves[1:]:
      out = compose_piecewise(out, _as_piecewise(c))
  elif all(_gaussian_parts(c) is not None for c in curves):
    out = curves[0]
    for c in curves[1:]:
      out = compose_curves(out, c)
  elif not args.grid:
    print("error: analytic and piecewise curves mixed; pass --grid to sample the result",
          file=sys.stderr)
    return EXIT_MIXED
  else:
    out = _as_piecewise(curves[0])
    for c in curves[1:]:
      out = compose_curves(out, _as_piecewise(c))
    out = sampled_curve(out)
  _write(dumps(curve_to_json(out), indent=2), args.output)
  if args.csv:
    a = np.linspace(0.0, 1.0, GRID_POINTS)
    table = np.column_stack([a, tradeoff_values(out, a)])
    np.savetxt(args.csv, table, fmt="%.12g", delimiter=",", header="alpha,beta", comments="",
               encoding="utf-8")
  return EXIT_OK


def cmd_envelope(args) -> int:
  curves = [parse_curve(s) for s in args.curves]
  if not all(is_exact(c) for c in curves):
    raise CurveSpecError("envelope needs piecewise-linear curves or PLDs")
  out = envelope_tradeoff([_as_piecewise(c) for c in curves])
  _write(dumps(tradeoff_to_json(out), indent=2), args.output)
  return EXIT_OK


def _exact_family(specs: Sequence[str]) -> List[DiscretePLD]:
  fam = [parse_curve(s) for s in specs]
  if not all(is_exact(c) for c in fam):
    raise CurveSpecError("family members must be piecewise-linear curves or PLDs")
  return [as_pld(c) for c in fam]


def _check_order(args) -> int:
  specs = list(args.a or []) + list(args.b or [])
  if len(specs) != 2:
    raise CurveSpecError("order needs exactly two curves (--a X --a Y or --a X --b Y)")
  x, y = (parse_curve(s) for s in specs)
  v = compare(x, y) if is_exact(x) and is_exact(y) else compare_analytic(x, y)
  _report(v)
  return EXIT_FAIL if v.relation == CROSSING else EXIT_OK


def _check_well_ordered(args) -> int:
  r = check_well_ordered(_exact_family(args.family), args.depth)
  _report(r)
  return EXIT_OK if r.well_ordered else EXIT_FAIL


def _check_commutes(args) -> int:
  if not args.L:
    raise CurveSpecError("commutes needs --L")
  L = _exact_family([args.L])[0]
  r = check_commutativity(L, _exact_family(args.family))
  _report(r)
  return EXIT_OK if r.commutes else EXIT_FAIL


def _check_free(args) -> int:
  fam = _exact_family(args.family)
  if args.budget_from_corollary:
    if len(fam) < 2:
      raise CurveSpecError("--budget-from-corollary needs two family members")
    g1, g2 = pld_to_tradeoff(fam[0]), pld_to_tradeoff(fam[1])
    if g1.delta > g2.delta:
      g1, g2 = g2, g1
    budget = corollary_budget(g1, g2)
  elif args.budget:
    budget = parse_curve(args.budget)
    if not is_exact(budget):
      raise CurveSpecError("check free needs a piecewise-linear budget")
  else:
    raise CurveSpecError("check free needs --budget or --budget-from-corollary")
  v = is_free(fam, as_pld(budget), args.k)
  out = v.to_json()
  out["budget"] = tradeoff_to_json(_as_piecewise(budget))
  _report(out)
  return EXIT_OK if v.free else EXIT_FAIL


def cmd_check(args) -> int:
  handler = {"order": _check_order, "well-ordered": _check_well_ordered,
             "commutes": _check_commutes, "free": _check_free}[args.property]
  if args.property in ("well-ordered", "commutes", "free") and not args.family:
    raise CurveSpecError(f"{args.property} needs --family")
  return handler(args)


def cmd_figure(args) -> int:
  from privfilter.figures import write_figure
  try:
    paths = write_figure(args.which, args.out, plot=not args.no_plot)
  except SearchFailure as exc:
    print(f"error: {exc}", file=sys.stderr)
    print(dumps(exc.summary, indent=2), file=sys.stderr)
    return EXIT_SEARCH
  _report({"figure": args.which, "files": paths})
  return EXIT_OK


def strategy_from_json(d) -> StrategyTree:
  """Parses ``{"query": spec-or-object, "children": {label: strategy}}``."""
  if not isinstance(d, dict) or "query" not in d:
    raise MalformedStrategyError("strategy node needs a 'query'")
  q = d["query"]
  try:
    curve = parse_curve(q) if isinstance(q, str) else curve_from_json(q)
  except CurveSpecError as exc:
    raise MalformedStrategyError(f"bad query: {exc}") from exc
  if not is_exact(curve):
    raise MalformedStrategyError("queries must be piecewise-linear curves or PLDs")
  children = d.get("children", {})
  if not isinstance(children, dict):
    raise MalformedStrategyError("'children' must be an object")
  return StrategyTree(as_pld(curve),
                      {str(k): strategy_from_json(v) for k, v in children.items()})


def cmd_simulate(args) -> int:
  try:
    with open(args.strategy, encoding="utf-8") as fh:
      tree = strategy_from_json(json.load(fh))
  except (OSError, json.JSONDecodeError) as exc:
    raise MalformedStrategyError(f"cannot read strategy: {exc}") from exc
  budget = parse_curve(args.budget)
  if is_exact(budget):
    budget = as_pld(budget)
  family = _exact_family(args.family) if args.family else None
  t = run_session(tree, budget, args.capacity, family=family, outcomes=args.outcomes,
                  halt_on_reject=args.halt_on_reject)
  out = t.to_json()
  if not isinstance(budget, DiscretePLD):
    out["budget"] = curve_to_json(budget)
  _write(dumps(out, indent=2), args.output)
  return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
  p = argparse.ArgumentParser(prog="privfilter", description=__doc__.split("\n\n")[0])
  sub = p.add_subparsers(dest="command", required=True)

  c = sub.add_parser("compose", help="compose two or more curves")
  c.add_argument("curves", nargs="+", metavar="SPEC")
  c.add_argument("-o", "--output", help="JSON output path (default stdout)")
  c.add_argument("--csv", help="also write alpha,beta samples on a 1001-point grid")
  c.add_argument("--grid", action="store_true",
                 help="allow mixed analytic/piecewise input; sample the result on the grid")
  c.set_defaults(func=cmd_compose, min_curves=2)

  e = sub.add_parser("envelope", help="lower convex envelope of piecewise curves")
  e.add_argument("curves", nargs="+", metavar="SPEC")
  e.add_argument("-o", "--output")
  e.set_defaults(func=cmd_envelope, min_curves=1)

  k = sub.add_parser("check", help="decide an ordering or freeness property")
  k.add_argument("property", choices=["order", "well-ordered", "commutes", "free"])
  k.add_argument("--a", action="append", help="first curve (repeat for the second)")
  k.add_argument("--b", action="append", help="second curve")
  k.add_argument("--family", nargs="+", metavar="SPEC")
  k.add_argument("--L", help="fixed PLD for commutes")
  k.add_argument("--budget")
  k.add_argument("--budget-from-corollary", action="store_true",
                 help="budget matching the first envelope slope of the first two members")
  k.add_argument("--k", type=int, default=2, help="queries for free (default 2)")
  k.add_argument("--depth", type=int, default=2, help="closure depth for well-ordered")
  k.set_defaults(func=cmd_check)

  f = sub.add_parser("figure", help="write counter-example figure data")
  f.add_argument("which", choices=["1a", "1b", "2a", "2b", "3a", "3b"])
  f.add_argument("--out", default=".", help="output directory")
  f.add_argument("--no-plot", action="store_true", help="CSV and JSON only")
  f.set_defaults(func=cmd_figure)

  s = sub.add_parser("simulate", help="run the natural filter against a strategy tree")
  s.add_argument("strategy", help="strategy JSON file")
  s.add_argument("--budget", required=True)
  s.add_argument("--capacity", type=int, required=True)
  s.add_argument("--family", nargs="+", metavar="SPEC")
  s.add_argument("--outcomes", nargs="+", help="outcome labels for the reported path")
  s.add_argument("--halt-on-reject", action="store_true")
  s.add_argument("-o", "--output")
  s.set_defaults(func=cmd_simulate)
  return p


def main(argv: Optional[Sequence[str]] = None) -> int:
  args = build_parser().parse_args(argv)
  if len(getattr(args, "curves", ())) < getattr(args, "min_curves", 0):
    print(f"error: {args.command} needs at least {args.min_curves} curves", file=sys.stderr)
    return EXIT_INPUT
  try:
    return args.func(args)
  except EnumerationGuardError as exc:
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_GUARD
  except (PrivFilterError, ValueError) as exc:
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
  sys.exit(main())
