"""Fixed 15-point Gauss-Kronrod rule used for cumulative-hazard integrals.

The rule is applied after substituting m = t^shape, which integrates the
Weibull baseline factor exactly: only the (smooth, bounded) covariate and
association factor is left to the quadrature.  Nodes exclude the interval
endpoints, so integrands may be evaluated arbitrarily close to t = 0
without hitting the t^(shape-1) singularity.

Weights are renormalized to sum to one so that a constant integrand is
reproduced to machine precision independent of the tabulated precision.
"""

from __future__ import annotations

import numpy as np

# 15-point Kronrod nodes/weights on [-1, 1] (QUADPACK tabulation).
_KRONROD_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,
    0.207784955007898, 0.405845151377397, 0.586087235467691,
    0.741531185599394, 0.864864423359769, 0.949107912342759,
    0.991455371120813,
])
_KRONROD_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267,
    0.140653259715525, 0.104790010322250, 0.063092092629979,
    0.022935322010529,
])

#: Node positions mapped to (0, 1); paired weights sum to exactly 1.
UNIT_NODES = (_KRONROD_NODES + 1.0) / 2.0
UNIT_WEIGHTS = _KRONROD_WEIGHTS / _KRONROD_WEIGHTS.sum()


def panel_nodes(panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on (0, 1) for an even subdivision into panels."""
    if panels < 1:
        raise ValueError("panels must be >= 1")
    offsets = np.arange(panels)[:, None] / panels
    nodes = (offsets + UNIT_NODES[None, :] / panels).ravel()
    weights = np.tile(UNIT_WEIGHTS / panels, panels)
    return nodes, weights
