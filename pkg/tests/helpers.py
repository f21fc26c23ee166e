"""Shared randomized-state builders for the invariant-domain suites."""

from __future__ import annotations

import numpy as np

from arznet import model as M
from arznet.domains import InvariantBox


def sample_states(law, rng, n, rho_range=(1e-3, 1.0), v_range=(0.0, 1.0), c_range=(0.5, 1.5)):
    rho = rng.uniform(*rho_range, n)
    v = rng.uniform(*v_range, n)
    c = rng.uniform(*c_range, n)
    return M.from_primitives(law, rho, v, c)


def box_spanning(law, states, pad=0.0) -> InvariantBox:
    """Smallest box containing the given states (all are members by
    construction), optionally padded."""
    _, v, w, c = M.primitives(law, states)
    return InvariantBox(
        v_min=float(np.min(v)) - pad,
        w_min=float(np.min(w)) - pad,
        w_max=float(np.max(w)) + pad,
        c_min=float(np.min(c)) - pad,
        c_max=float(np.max(c)) + pad,
    )


def laws_for(gammas=(0.0, 1.0, 2.0), v_ref=0.3):
    return [M.PressureLaw(v_ref, g, g + 1.0) for g in gammas]
