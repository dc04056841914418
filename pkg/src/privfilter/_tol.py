"""Global comparison tolerances.

``EPS`` governs equality/ordering of slopes, widths and curve values. It can be
overridden with the ``PFL_EPS`` environment variable before import.
"""

import os

EPS = float(os.environ.get("PFL_EPS", "1e-9"))

# Atoms closer than this in log-likelihood are merged.
Z_MERGE = 1e-12

# Atoms lighter than this are folded into their nearest neighbour.
P_FLOOR = 1e-15

# Gaps below this are never used as strict witnesses for analytic curves.
ANALYTIC_TOL = 1e-7
