"""Two-variable MPCC ``min (x-1)^2 + (y-1)^2  s.t.  0 <= x _|_ y >= 0``.

The two branches ``x = 0`` and ``y = 0`` each give objective 1, at (0, 1) and (1, 0).
"""
from __future__ import annotations

import numpy as np

from ..transcription import build_mpcc

TOY_START = (0.8, 0.2)
TOY_DELTA = 1e-10
TOY_RHO = 10.0


def toy_objective(v):
    return (v[0] - 1) ** 2 + (v[1] - 1) ** 2


def toy_nlp(mode=None):
    return build_mpcc(toy_objective, 2, [(0, 1)], mode=mode, name="toy")


def toy_branch_oracle():
    """Best point over the active sets ``x = 0`` and ``y = 0`` of the nonnegative quadrant."""
    best = None
    for fixed in (0, 1):
        v = np.ones(2)
        v[fixed] = 0.0  # the free coordinate's unconstrained minimizer 1 is feasible
        f = toy_objective(v)
        if best is None or f < best[1]:
            best = (v, f)
    return best
