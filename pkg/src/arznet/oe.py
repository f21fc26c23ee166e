"""Oscillation damping of higher Legendre modes.

After each RK stage, mode i >= 1 of every cell is multiplied by
exp(-tau*theta_j/dx * sum_{q<=i} sigma_j^q), where theta_j is the
Jacobian spectral radius at the cell average and the coefficients
sigma_j^i are driven by inter-cell jumps of the solution derivatives,
normalized by the global deviation of the field. Mode 0 is never
touched, so cell averages are preserved to the bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from . import mesh as msh
from .model import PressureLaw, spectral_radius

__all__ = ["DampingProfile", "sigma_coeffs", "apply_oe", "damping_profile"]


@dataclass(frozen=True)
class DampingProfile:
    """Per-cell spectral radii and per-order damping coefficients."""

    theta: np.ndarray  # (n_cells,)
    sigma: np.ndarray  # (n_cells, k+1), componentwise max already taken

    def __post_init__(self) -> None:
        if np.any(self.sigma < 0.0) or np.any(self.theta < 0.0):
            raise ValueError("damping data must be nonnegative")


@lru_cache(maxsize=None)
def _end_deriv_matrices(k: int) -> tuple[np.ndarray, np.ndarray]:
    """(k+1, k+1) matrices of d^i/dxi^i of each basis function at the cell
    ends, in reference coordinates (chain factor (1/dx)^i applied later)."""
    left = np.empty((k + 1, k + 1))
    right = np.empty((k + 1, k + 1))
    for i in range(k + 1):
        left[i] = msh.basis_deriv_matrix(k, np.array([-0.5]), i, 1.0)[:, 0]
        right[i] = msh.basis_deriv_matrix(k, np.array([0.5]), i, 1.0)[:, 0]
    return left, right


def sigma_coeffs(
    coeffs: np.ndarray,
    dx: float,
    k: int,
    exterior_left: np.ndarray | None = None,
    exterior_right: np.ndarray | None = None,
    *,
    periodic: bool = False,
    gl_nodes: np.ndarray | None = None,
) -> np.ndarray:
    """Damping coefficients for one scalar field.

    coeffs: (n_cells, k+1) modal coefficients. Exterior neighbors are
    constant states (their derivatives vanish); under periodic wrap the
    first/last cells see each other. Returns (n_cells, k+1).
    """
    coeffs = np.asarray(coeffs, float)
    n = coeffs.shape[0]
    if gl_nodes is None:
        gl_nodes = msh.gauss_lobatto(k + 1).nodes

    # global L_inf deviation from the domain mean, sampled at GL nodes
    mean = float(coeffs[:, 0].mean())
    node_vals = msh.eval_poly(coeffs, gl_nodes)
    dev = float(np.abs(node_vals - mean).max())
    if dev == 0.0:
        return np.zeros((n, k + 1))

    left_m, right_m = _end_deriv_matrices(k)
    # derivative end values per order: (k+1 orders, n_cells)
    dxi = dx ** -np.arange(k + 1, dtype=float)
    val_left = (left_m @ coeffs.T) * dxi[:, None]
    val_right = (right_m @ coeffs.T) * dxi[:, None]

    jumps = np.empty((k + 1, n + 1))
    jumps[:, 1:n] = val_left[:, 1:] - val_right[:, :-1]
    if periodic:
        jumps[:, 0] = val_left[:, 0] - val_right[:, -1]
        jumps[:, n] = jumps[:, 0]
    else:
        # exterior neighbors are constant states, so only order 0 carries
        # their value; a missing exterior contributes no jump at all
        if exterior_left is None:
            jumps[:, 0] = 0.0
        else:
            jumps[:, 0] = val_left[:, 0]
            jumps[0, 0] -= float(exterior_left)
        if exterior_right is None:
            jumps[:, n] = 0.0
        else:
            jumps[:, n] = -val_right[:, -1]
            jumps[0, n] += float(exterior_right)

    orders = np.arange(k + 1, dtype=float)
    front = (2.0 * orders + 1.0) * dx**orders / ((2.0 * k - 1.0) * np.array([factorial(i) for i in range(k + 1)]))
    per_cell = np.abs(jumps[:, :n]) + np.abs(jumps[:, 1 : n + 1])
    return (front[:, None] * per_cell / (2.0 * dev)).T


def damping_profile(
    law: PressureLaw,
    coeffs: np.ndarray,
    avg_states: np.ndarray,
    dx: float,
    k: int,
    exterior_left: np.ndarray | None = None,
    exterior_right: np.ndarray | None = None,
    *,
    periodic: bool = False,
) -> DampingProfile:
    """Per-cell damping data for a 3-component solution.

    theta comes from the step-start cell averages; sigma is the
    componentwise max over (rho, y, z) of the scalar coefficients.
    """
    theta = spectral_radius(law, avg_states)
    n, m, _ = coeffs.shape
    gl_nodes = msh.gauss_lobatto(k + 1).nodes

    # global L_inf deviation per component, sampled at GL nodes
    mean = coeffs[:, :, 0].mean(axis=0)  # (m,)
    node_vals = msh.eval_poly(coeffs, gl_nodes)  # (n, m, P)
    dev = np.abs(node_vals - mean[None, :, None]).max(axis=(0, 2))  # (m,)

    left_m, right_m = _end_deriv_matrices(k)
    dxi = dx ** -np.arange(k + 1, dtype=float)
    val_left = np.einsum("il,nml->inm", left_m, coeffs) * dxi[:, None, None]
    val_right = np.einsum("il,nml->inm", right_m, coeffs) * dxi[:, None, None]

    jumps = np.empty((k + 1, n + 1, m))
    jumps[:, 1:n] = val_left[:, 1:] - val_right[:, :-1]
    if periodic:
        jumps[:, 0] = val_left[:, 0] - val_right[:, -1]
        jumps[:, n] = jumps[:, 0]
    else:
        if exterior_left is None:
            jumps[:, 0] = 0.0
        else:
            jumps[:, 0] = val_left[:, 0]
            jumps[0, 0] -= np.asarray(exterior_left, float)
        if exterior_right is None:
            jumps[:, n] = 0.0
        else:
            jumps[:, n] = -val_right[:, -1]
            jumps[0, n] += np.asarray(exterior_right, float)

    orders = np.arange(k + 1, dtype=float)
    front = (2.0 * orders + 1.0) * dx**orders / (
        (2.0 * k - 1.0) * np.array([factorial(i) for i in range(k + 1)])
    )
    per_cell = np.abs(jumps[:, :n]) + np.abs(jumps[:, 1 : n + 1])  # (k+1, n, m)
    safe_dev = np.where(dev > 0.0, dev, 1.0)
    sig_all = front[:, None, None] * per_cell / (2.0 * safe_dev)
    sig_all = np.where(dev[None, None, :] > 0.0, sig_all, 0.0)
    sig = sig_all.max(axis=2).T  # (n, k+1)
    return DampingProfile(theta=theta, sigma=sig)


def apply_oe(coeffs: np.ndarray, profile: DampingProfile, tau: float, dx: float) -> np.ndarray:
    """Damp modes >= 1 by the closed-form exponential factors; mode 0 is
    copied through untouched."""
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    out = np.array(coeffs, float, copy=True)
    if tau == 0.0:
        return out
    partial = np.cumsum(profile.sigma, axis=1)  # (n, k+1)
    factors = np.exp(-(tau / dx) * profile.theta[:, None] * partial[:, 1:])
    out[:, :, 1:] *= factors[:, None, :]
    return out
