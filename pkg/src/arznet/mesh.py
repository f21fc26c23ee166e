"""Uniform 1D meshes, modal Legendre bases, quadrature, and projection.

Reference cell is [-1/2, 1/2]; basis function ell is P_ell(2*xi), so the
degree-0 coefficient of a cell polynomial equals its cell average and the
modal mass factors are (2*ell+1)/dx. Cell data is stored as ndarrays of
modal coefficients with the mode index last: (n_cells, n_comp, k+1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

__all__ = [
    "Mesh1D",
    "QuadratureRule",
    "legendre_eval",
    "basis_matrix",
    "basis_deriv_matrix",
    "gauss_lobatto",
    "gauss_legendre",
    "project",
    "eval_poly",
    "cell_averages",
]


@dataclass(frozen=True)
class Mesh1D:
    x_left: float
    x_right: float
    n_cells: int

    def __post_init__(self) -> None:
        if self.n_cells < 1 or not self.x_right > self.x_left:
            raise ValueError("mesh requires x_right > x_left and n_cells >= 1")

    @property
    def dx(self) -> float:
        return (self.x_right - self.x_left) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def interfaces(self) -> np.ndarray:
        return self.x_left + np.arange(self.n_cells + 1) * self.dx

    def to_global(self, xi: np.ndarray) -> np.ndarray:
        """Map reference coordinates (...,) to (n_cells, ...) physical points."""
        return self.centers[:, None] + np.asarray(xi, float)[None, :] * self.dx


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes on the reference cell [-1/2, 1/2]; weights sum to 1."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes/weights shape mismatch")


def legendre_eval(ell: int, xi) -> np.ndarray:
    """Value of the degree-ell reference basis polynomial P_ell(2*xi)."""
    coef = np.zeros(ell + 1)
    coef[ell] = 1.0
    return npleg.legval(2.0 * np.asarray(xi, float), coef)


@lru_cache(maxsize=None)
def _basis_matrices(k: int, key: tuple[float, ...], order: int) -> np.ndarray:
    xi = np.asarray(key, float)
    out = np.empty((k + 1, xi.size))
    for ell in range(k + 1):
        coef = np.zeros(ell + 1)
        coef[ell] = 1.0
        d = npleg.legder(coef, order) if order else coef
        out[ell] = npleg.legval(2.0 * xi, d) * (2.0**order)
    return out


def basis_matrix(k: int, xi: np.ndarray) -> np.ndarray:
    """(k+1, n_pts) values of the reference basis at points xi."""
    return _basis_matrices(k, tuple(np.asarray(xi, float).ravel()), 0)


def basis_deriv_matrix(k: int, xi: np.ndarray, order: int, dx: float) -> np.ndarray:
    """(k+1, n_pts) values of d^order/dx^order of the basis; includes the
    (2/dx)^order chain factor of the reference map."""
    ref = _basis_matrices(k, tuple(np.asarray(xi, float).ravel()), order)
    return ref / dx**order


@lru_cache(maxsize=None)
def gauss_lobatto(n_points: int) -> QuadratureRule:
    """Normalized Gauss-Lobatto rule; exact for degree <= 2*n_points - 3."""
    if n_points < 2:
        raise ValueError("Gauss-Lobatto needs at least 2 points")
    if n_points == 2:
        nodes = np.array([-1.0, 1.0])
    else:
        coef = np.zeros(n_points)
        coef[-1] = 1.0
        interior = npleg.legroots(npleg.legder(coef))
        nodes = np.concatenate(([-1.0], np.sort(interior), [1.0]))
    coef = np.zeros(n_points)
    coef[-1] = 1.0
    pl = npleg.legval(nodes, coef)
    weights = 2.0 / (n_points * (n_points - 1) * pl * pl)
    return QuadratureRule(nodes=0.5 * nodes, weights=0.5 * weights)


@lru_cache(maxsize=None)
def gauss_legendre(n_points: int) -> QuadratureRule:
    """Normalized Gauss rule on the reference cell; exact for degree <= 2n-1."""
    nodes, weights = npleg.leggauss(n_points)
    return QuadratureRule(nodes=0.5 * nodes, weights=0.5 * weights)


def project(sampler, mesh: Mesh1D, k: int, *, n_quad: int | None = None) -> np.ndarray:
    """L2-project a function of x onto the broken P^k space.

    sampler maps an array of points to values with the component axis last;
    returns modal coefficients (n_cells, n_comp, k+1). Reproduces degree-k
    polynomial data exactly (up to quadrature round-off).
    """
    rule = gauss_legendre(n_quad if n_quad is not None else k + 3)
    phi = basis_matrix(k, rule.nodes)  # (k+1, Q)
    x = mesh.to_global(rule.nodes)  # (n_cells, Q)
    vals = np.asarray(sampler(x), float)  # (n_cells, Q, n_comp) or (n_cells, Q)
    if vals.ndim == 2:
        vals = vals[..., None]
    vals = np.moveaxis(vals, 1, -1)  # (n_cells, n_comp, Q)
    scale = (2.0 * np.arange(k + 1) + 1.0)[:, None]
    return np.einsum("ncq,lq->ncl", vals, phi * scale * rule.weights)


def eval_poly(coeffs: np.ndarray, xi: np.ndarray, k: int | None = None) -> np.ndarray:
    """Evaluate cell polynomials at reference points.

    coeffs: (..., k+1) modal coefficients; returns (..., n_pts).
    """
    coeffs = np.asarray(coeffs, float)
    kk = coeffs.shape[-1] - 1 if k is None else k
    phi = basis_matrix(kk, np.asarray(xi, float))
    return coeffs @ phi


def cell_averages(coeffs: np.ndarray) -> np.ndarray:
    """Degree-0 coefficients, i.e. the cell means."""
    return np.asarray(coeffs, float)[..., 0]
