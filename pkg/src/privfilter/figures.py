"""Figure data for the counter-examples.

Each figure is a table of curve samples on a fixed alpha grid plus a small
JSON summary. The tables are written as CSV and, unless disabled, rendered to
PNG with matplotlib. All grids are fixed, so outputs are byte-for-byte
reproducible.
"""

from __future__ import annotations

import dataclasses
import io
import math
import os
from typing import Dict, List

import numpy as np

from privfilter.compose import compose_piecewise
from privfilter.curves import make_approx_dp
from privfilter.filter import build_crossing_counterexample, build_gdp_budget_counterexample, lhs_rhs
from privfilter.order import compare
from privfilter.pld import dumps

FIGURES = ("1a", "1b", "2a", "2b", "3a", "3b")
N_POINTS = 1001
CSV_FMT = "%.12g"

# Crossing pairs (eps1, delta1, eps2, delta2) for the two regimes.
CASE_1 = (math.log(4), 0.01, math.log(2), 0.1)
CASE_2 = (math.log(2), 0.01, math.log(1.1), 0.3)
PURE_EPS = (math.log(3), math.log(2))


@dataclasses.dataclass(frozen=True)
class FigureData:
  """Curve samples for one figure.

  Attributes:
    name: figure id, one of ``FIGURES``.
    title: plot title.
    columns: ordered mapping of column name to samples; ``alpha`` comes first.
    summary: JSON-ready description of the construction.
  """
  name: str
  title: str
  columns: Dict[str, np.ndarray]
  summary: dict


def alpha_grid(n: int = N_POINTS) -> np.ndarray:
  return np.linspace(0.0, 1.0, n)


def _crossing_figure(name, params):
  ce = build_crossing_counterexample(*params)
  a = alpha_grid()
  g1, g2 = ce.g1, ce.g2
  cols = {
      "alpha": a,
      "g1": g1(a),
      "g2": g2(a),
      "g1_g1": compose_piecewise(g1, g1)(a),
      "g1_g2": compose_piecewise(g1, g2)(a),
      "lhs": ce.lhs(a),
      "rhs": ce.rhs(a),
  }
  title = f"Crossing pair, case {ce.case}"
  return FigureData(name, title, cols, ce.to_json())


def _pure_dp_chain():
  e1, e2 = PURE_EPS
  f1, f2 = make_approx_dp(e1, 0.0), make_approx_dp(e2, 0.0)
  two = compose_piecewise(f2, f2)
  a = alpha_grid()
  cols = {"alpha": a, "f_eps1": f1(a), "f_eps2": f2(a), "f_eps2_x2": two(a)}
  summary = {
      "eps1": e1, "eps2": e2,
      "f_eps1_vs_f_eps2": compare(f1, f2).relation,
      "f_eps1_vs_f_eps2_x2": compare(f1, two).relation,
  }
  return FigureData("2a", "Nested pure-DP curves and a two-step composition", cols, summary)


def _pure_dp_closure():
  e1, e2 = PURE_EPS
  g1 = compose_piecewise(make_approx_dp(e2, 0.0), make_approx_dp(e2, 0.0))
  g2 = make_approx_dp(e1, 0.0)
  lhs, rhs = lhs_rhs(g1, g2)
  a = alpha_grid()
  cols = {"alpha": a, "g1": g1(a), "g2": g2(a), "lhs": lhs(a), "rhs": rhs(a)}
  xs = np.unique(np.concatenate([lhs.breakpoints, rhs.breakpoints]))
  gaps = rhs(xs) - lhs(xs)
  k = int(np.argmax(gaps))
  summary = {
      "g1": "f_eps2 (x) f_eps2", "g2": "f_eps1", "eps1": e1, "eps2": e2,
      "g1_vs_g2": compare(g1, g2).relation,
      "max_gap": float(gaps[k]), "gap_location": float(xs[k]),
  }
  return FigureData("2b", "Closure of a pure-DP family is not well-ordered", cols, summary)


def _gdp_figure(name, kind):
  ce = build_gdp_budget_counterexample(kind)
  cols = ce.samples(alpha_grid())
  return FigureData(name, f"{kind} budget counter-example", cols, ce.to_json())


def figure_data(which: str) -> FigureData:
  """Builds the samples for figure ``which``.

  Raises:
    ValueError: unknown figure id.
    SearchFailure: the Gaussian budget search found nothing (3a/3b).
  """
  if which == "1a":
    return _crossing_figure("1a", CASE_1)
  if which == "1b":
    return _crossing_figure("1b", CASE_2)
  if which == "2a":
    return _pure_dp_chain()
  if which == "2b":
    return _pure_dp_closure()
  if which == "3a":
    return _gdp_figure("3a", "pure-GDP")
  if which == "3b":
    return _gdp_figure("3b", "approx-GDP")
  raise ValueError(f"unknown figure {which!r}; expected one of {', '.join(FIGURES)}")


def to_csv(columns: Dict[str, np.ndarray]) -> str:
  names = list(columns)
  table = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
  buf = io.StringIO()
  np.savetxt(buf, table, fmt=CSV_FMT, delimiter=",", header=",".join(names), comments="")
  return buf.getvalue()


def render_png(fig: FigureData, path: str) -> None:
  """Plots every non-alpha column against alpha."""
  import matplotlib
  matplotlib.use("Agg")
  import matplotlib.pyplot as plt

  a = fig.columns["alpha"]
  f, ax = plt.subplots(figsize=(5.5, 5.0))
  for k, v in fig.columns.items():
    if k == "alpha":
      continue
    ax.plot(a, v, lw=1.2, label=k)
  ax.plot(a, 1.0 - a, color="0.7", lw=0.8, ls=":", label="identity")
  ax.set_xlim(0, 1)
  ax.set_ylim(0, 1)
  ax.set_xlabel("Type I error")
  ax.set_ylabel("Type II error")
  ax.set_title(fig.title, fontsize=10)
  ax.legend(frameon=False, fontsize=8)
  f.tight_layout()
  # Drop the version string so the file does not depend on the matplotlib release.
  f.savefig(path, dpi=120, metadata={"Software": None})
  plt.close(f)


def write_figure(which: str, out_dir: str, plot: bool = True) -> List[str]:
  """Writes ``fig<which>.csv``, ``fig<which>.json`` and optionally ``.png``.

  Returns:
    The paths written.
  """
  fig = figure_data(which)
  os.makedirs(out_dir, exist_ok=True)
  stem = os.path.join(out_dir, f"fig{which}")
  paths = [stem + ".csv", stem + ".json"]
  with open(paths[0], "w", encoding="utf-8", newline="\n") as fh:
    fh.write(to_csv(fig.columns))
  with open(paths[1], "w", encoding="utf-8") as fh:
    fh.write(dumps(fig.summary, indent=2) + "\n")
  if plot:
    paths.append(stem + ".png")
    render_png(fig, paths[2])
  return paths
