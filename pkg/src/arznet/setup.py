"""Problem assembly: project initial data, estimate the initial global
invariant domain, and build a ready-to-run road solver."""

from __future__ import annotations

import numpy as np

from . import dg, mesh as msh
from .domains import estimate_global_box, update_global_box
from .limiter import limit_cells
from .model import PressureLaw
from .stepper import RoadSolver, StepConfig

__all__ = ["build_road"]

GLOBAL_BOX_EPS = 1e-9
SAMPLES_PER_CELL = 1000


def build_road(
    law: PressureLaw,
    mesh: msh.Mesh1D,
    sampler,
    bc: dg.BoundaryCondition,
    config: StepConfig,
    *,
    samples_per_cell: int = SAMPLES_PER_CELL,
    eps0: float = GLOBAL_BOX_EPS,
) -> RoadSolver:
    """Project the initial data, estimate the global domain by sampling the
    projected solution on a uniform auxiliary mesh, and pre-limit the
    projection so the run starts feasible at the check nodes."""
    coeffs = msh.project(sampler, mesh, config.k)

    def sample_projection(x):
        x = np.asarray(x, float)
        xi = (x - mesh.x_left) / mesh.dx
        cells = np.clip(np.floor(xi).astype(int), 0, mesh.n_cells - 1)
        ref = xi - cells - 0.5
        phi = msh.basis_matrix(config.k, ref)  # (k+1, N)
        return np.einsum("ncl,ln->nc", coeffs[cells], phi)

    box = estimate_global_box(
        law, sample_projection, mesh.x_left, mesh.x_right,
        samples_per_cell * mesh.n_cells, eps0,
    )
    # the cell-average invariants can leave the pointwise sample range near
    # vacuum (w and v are nonlinear in the state); admit them so the
    # initial limiting hypothesis holds by construction
    box = update_global_box(box, law, coeffs[:, :, 0])
    if config.mode.uses_limiter:
        coeffs, _ = limit_cells(
            law, coeffs, box, config.gl_rule.nodes,
            positivity_nodes=config.volume_rule.nodes,
            skip=config.skip_constraints, tol=config.tol,
        )
    else:
        # every mode needs evaluable initial data: enforce positivity only
        # (projection undershoot near vacuum), leaving the invariants free
        # so the unlimited schemes fail dynamically, not at t = 0
        coeffs, _ = limit_cells(
            law, coeffs, box, config.gl_rule.nodes,
            positivity_nodes=config.volume_rule.nodes,
            skip=frozenset({3, 4, 5, 6, 7}), tol=config.tol,
        )
    return RoadSolver(law, mesh, coeffs, bc, config, box)
