"""Exact privacy accounting with privacy loss distributions and tradeoff curves."""

from privfilter.curves import (GaussianTradeoff, TradeoffCurve, eval_gaussian, eval_tradeoff,
                               identity_curve, make_approx_dp, make_pure_delta,
                               symmetric_fixed_point, validate_tradeoff)
from privfilter.pld import (DiscretePLD, HockeyStickCurve, convolve, esscher_pair,
                            hockey_to_pld, identity_pld, make_pld, pld_to_hockey,
                            pld_to_tradeoff, tradeoff_to_hockey, tradeoff_to_pld, validate_pld)
from privfilter.compose import (compose_delta_with_hockey, compose_gaussian, compose_pld_check,
                                compose_piecewise, eval_analytic_tradeoff)

__all__ = [
    "DiscretePLD", "GaussianTradeoff", "HockeyStickCurve", "TradeoffCurve",
    "compose_delta_with_hockey", "compose_gaussian", "compose_piecewise", "compose_pld_check",
    "convolve", "esscher_pair", "eval_analytic_tradeoff", "eval_gaussian", "eval_tradeoff",
    "hockey_to_pld", "identity_curve", "identity_pld", "make_approx_dp", "make_pld",
    "make_pure_delta", "pld_to_hockey", "pld_to_tradeoff", "symmetric_fixed_point",
    "tradeoff_to_hockey", "tradeoff_to_pld", "validate_pld", "validate_tradeoff",
]

__version__ = "0.1.0"
