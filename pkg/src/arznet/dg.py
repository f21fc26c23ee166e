"""Semidiscrete DG operator: volume integrals, LF interface fluxes, and
boundary-condition trace supply.

The modal right-hand side of cell j is
    (2l+1)/dx * [ integral F(U_h) dphi_l/dx + Fhat_{j-1/2} phi_l(left)
                  - Fhat_{j+1/2} phi_l(right) ],
with the two-point Lax-Friedrichs flux at interfaces. Junction ends may
carry a prescribed flux vector which replaces the LF evaluation there
(the coupling conditions own that interface).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mesh as msh
from .model import DomainError, PressureLaw, pressure

__all__ = ["BoundaryCondition", "periodic", "fixed_exterior", "junction_ghost", "lf_flux", "apply_L", "traces"]


@dataclass
class BoundaryCondition:
    """Exterior trace supply at the two road ends.

    kind "periodic": wraps traces; no exterior states exist.
    kind "fixed": exterior states are the given constant states.
    kind "junction": exterior states (and optionally prescribed interface
    flux vectors) are installed by the junction resolution each stage.
    """

    kind: str
    left_state: np.ndarray | None = None
    right_state: np.ndarray | None = None
    left_flux: np.ndarray | None = None
    right_flux: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("periodic", "fixed", "junction"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "fixed":
            for s in (self.left_state, self.right_state):
                if s is None or s[0] <= 0 or s[2] <= 0:
                    raise DomainError("fixed exterior states must lie in the positive quadrant")

    @property
    def is_periodic(self) -> bool:
        return self.kind == "periodic"

    def exterior(self, left_trace: np.ndarray, right_trace: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exterior states seen across the two boundary interfaces."""
        if self.is_periodic:
            return right_trace, left_trace
        if self.left_state is None or self.right_state is None:
            raise DomainError(f"{self.kind} boundary has no exterior states installed")
        return np.asarray(self.left_state, float), np.asarray(self.right_state, float)


def periodic() -> BoundaryCondition:
    return BoundaryCondition(kind="periodic")


def fixed_exterior(left_state, right_state) -> BoundaryCondition:
    return BoundaryCondition(
        kind="fixed", left_state=np.asarray(left_state, float), right_state=np.asarray(right_state, float)
    )


def junction_ghost() -> BoundaryCondition:
    return BoundaryCondition(kind="junction")


def lf_flux(law: PressureLaw, u_minus: np.ndarray, u_plus: np.ndarray, alpha: float) -> np.ndarray:
    """0.5*[F(U-) + F(U+) - alpha*(U+ - U-)]."""
    if not alpha > 0:
        raise DomainError("lf_flux requires alpha > 0")
    u_minus = np.asarray(u_minus, float)
    u_plus = np.asarray(u_plus, float)
    fm = _flux_states(law, u_minus, "left trace")
    fp = _flux_states(law, u_plus, "right trace")
    return 0.5 * (fm + fp - alpha * (u_plus - u_minus))


def _flux_states(law: PressureLaw, states: np.ndarray, what: str) -> np.ndarray:
    rho, z = states[..., 0], states[..., 2]
    if np.any(rho <= 0.0) or np.any(z <= 0.0):
        bad = np.nonzero(~((rho > 0) & (z > 0)))
        raise DomainError(f"{what} outside the positive quadrant at index {bad[0][:4]}")
    v = states[..., 1] / rho - pressure(law, rho, z)
    return v[..., None] * states


def traces(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left-end and right-end values of every cell polynomial: (n, 3) each."""
    # P_l(-1) = (-1)^l, P_l(1) = 1: cheap alternating sums over modes
    k1 = coeffs.shape[-1]
    signs = (-1.0) ** np.arange(k1)
    left = coeffs @ signs
    right = coeffs.sum(axis=-1)
    return left, right


def interface_states(
    coeffs: np.ndarray, bc: BoundaryCondition
) -> tuple[np.ndarray, np.ndarray]:
    """(U_minus, U_plus) at the n+1 interfaces, exterior states included."""
    left, right = traces(coeffs)
    ext_l, ext_r = bc.exterior(left[0], right[-1])
    u_minus = np.concatenate([ext_l[None, :], right], axis=0)
    u_plus = np.concatenate([left, ext_r[None, :]], axis=0)
    return u_minus, u_plus


def apply_L(
    law: PressureLaw,
    coeffs: np.ndarray,
    dx: float,
    bc: BoundaryCondition,
    alpha: float,
    *,
    volume_rule: msh.QuadratureRule | None = None,
    return_boundary_fluxes: bool = False,
):
    """Modal time derivative of the broken solution.

    coeffs: (n_cells, 3, k+1). alpha is the single LF speed dominating all
    interfaces (caller-supplied). Trace or volume states outside the
    positive quadrant raise DomainError carrying the cell index.
    """
    coeffs = np.asarray(coeffs, float)
    n, _, k1 = coeffs.shape
    k = k1 - 1
    rule = volume_rule if volume_rule is not None else msh.gauss_legendre(k + 1)

    u_minus, u_plus = interface_states(coeffs, bc)
    fhat = lf_flux(law, u_minus, u_plus, alpha)  # (n+1, 3)
    if bc.kind == "junction":
        if bc.left_flux is not None:
            fhat[0] = bc.left_flux
        if bc.right_flux is not None:
            fhat[-1] = bc.right_flux

    # volume term: sum_q w_q F(U(xi_q)) dphi_l/dxi(xi_q), with the 1/dx of
    # the chain rule cancelling the dx of the measure
    rhs = np.zeros_like(coeffs)
    if k > 0:
        vals = msh.eval_poly(coeffs, rule.nodes)  # (n, 3, Q)
        states = np.moveaxis(vals, 1, 2)  # (n, Q, 3)
        rho, z = states[..., 0], states[..., 2]
        if np.any(rho <= 0.0) or np.any(z <= 0.0):
            bad = np.nonzero(~np.all((rho > 0) & (z > 0), axis=1))[0]
            raise DomainError(f"volume quadrature state outside the positive quadrant in cells {bad[:4]}")
        v = states[..., 1] / rho - pressure(law, rho, z)
        fvol = v[..., None] * states  # (n, Q, 3)
        dphi = msh.basis_deriv_matrix(k, rule.nodes, 1, 1.0)  # reference derivative
        rhs += np.einsum("nqc,lq->ncl", fvol * rule.weights[:, None], dphi)

    signs = (-1.0) ** np.arange(k1)
    rhs += fhat[:-1, None, :].transpose(0, 2, 1) * signs  # left interface, phi(-1/2)
    rhs -= fhat[1:, None, :].transpose(0, 2, 1)  # right interface, phi(1/2) = 1
    rhs *= (2.0 * np.arange(k1) + 1.0) / dx
    if return_boundary_fluxes:
        return rhs, (fhat[0].copy(), fhat[-1].copy())
    return rhs
