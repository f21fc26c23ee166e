"""ARZ / adapted-pressure ARZ physics: state algebra, pressure laws, wave speeds.

Conservative states are arrays whose last axis holds (rho, y, z):
density, generalized momentum, and marker-weighted density. The flux is
F(U) = v*U with v = y/rho - p(rho, z). All functions broadcast over
arbitrary leading shapes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "PressureLaw",
    "SBarVariant",
    "SpeedEstimate",
    "make_state",
    "pressure",
    "pressure_derivs",
    "primitives",
    "from_primitives",
    "flux",
    "eigen_speeds",
    "spectral_radius",
    "alpha_bar",
    "speed_radius",
    "s_value",
    "alpha_max",
    "alpha_max_value",
]

# Density floor used only when evaluating diagnostics of states already
# certified positive; solver states are never clamped.
RHO_FLOOR = 1e-14


class DomainError(ValueError):
    """Raised when a state leaves the domain where the law is defined."""


class SBarVariant(enum.Enum):
    """Which s-bound to use over the interface density/marker box.

    STANDARD puts exponent gamma-kappa on the lower density bound;
    EXACT uses the supremum of s(rho, z) = rho^2 p_rho + rho z p_z over
    the box, which carries exponent gamma-kappa+1.
    """

    STANDARD = "standard"
    EXACT = "exact"


@dataclass(frozen=True)
class PressureLaw:
    """Two-branch driver-response pressure.

    gamma > 0: p = (v_ref/gamma) * z**kappa * rho**(gamma-kappa)
    gamma = 0: p = v_ref * log(rho)  (z plays no role)
    """

    v_ref: float
    gamma: float
    kappa: float

    def __post_init__(self) -> None:
        if not self.v_ref > 0:
            raise ValueError(f"v_ref must be positive, got {self.v_ref}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.kappa < self.gamma + 1:
            raise ValueError(
                f"kappa must satisfy kappa >= gamma+1, got kappa={self.kappa}, gamma={self.gamma}"
            )

    @property
    def is_log(self) -> bool:
        return self.gamma == 0.0


def make_state(rho, y, z) -> np.ndarray:
    """Stack components into a (..., 3) conservative state array."""
    return np.stack(np.broadcast_arrays(np.asarray(rho, float), np.asarray(y, float), np.asarray(z, float)), axis=-1)


def _check_positive(rho: np.ndarray, z: np.ndarray, what: str) -> None:
    if np.min(rho) <= 0.0 or np.min(z) <= 0.0:
        raise DomainError(f"{what} requires rho > 0 and z > 0")


def pressure(law: PressureLaw, rho, z, *, floor: float = 0.0) -> np.ndarray:
    """Evaluate p(rho, z). With floor > 0, inputs are clamped inside the
    log/negative powers only (diagnostic use on certified states)."""
    rho = np.asarray(rho, float)
    z = np.asarray(z, float)
    if floor > 0.0:
        rho = np.maximum(rho, floor)
        z = np.maximum(z, floor)
    else:
        _check_positive(rho, z, "pressure")
    if law.is_log:
        return law.v_ref * np.log(rho)
    return (law.v_ref / law.gamma) * z**law.kappa * rho ** (law.gamma - law.kappa)


def pressure_derivs(law: PressureLaw, rho, z, *, floor: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (p_rho, p_z) of the active branch."""
    rho = np.asarray(rho, float)
    z = np.asarray(z, float)
    if floor > 0.0:
        rho = np.maximum(rho, floor)
        z = np.maximum(z, floor)
    else:
        _check_positive(rho, z, "pressure_derivs")
    if law.is_log:
        p_rho = law.v_ref / rho
        return p_rho, np.zeros_like(p_rho)
    coef = law.v_ref / law.gamma
    p_rho = coef * (law.gamma - law.kappa) * z**law.kappa * rho ** (law.gamma - law.kappa - 1.0)
    p_z = coef * law.kappa * z ** (law.kappa - 1.0) * rho ** (law.gamma - law.kappa)
    return p_rho, p_z


def primitives(law: PressureLaw, state: np.ndarray, *, floor: float = 0.0) -> tuple[np.ndarray, ...]:
    """(rho, v, w, c) with w = y/rho, c = z/rho, v = w - p(rho, z)."""
    state = np.asarray(state, float)
    rho = state[..., 0]
    if floor <= 0.0 and not np.all(rho > 0.0):
        raise DomainError("primitives requires rho > 0")
    rho_safe = np.maximum(rho, floor) if floor > 0.0 else rho
    w = state[..., 1] / rho_safe
    c = state[..., 2] / rho_safe
    v = w - pressure(law, rho, state[..., 2], floor=floor)
    return rho, v, w, c


def from_primitives(law: PressureLaw, rho, v, c) -> np.ndarray:
    """Conservative state from (rho, v, c); w = v + p(rho, c*rho)."""
    rho = np.asarray(rho, float)
    c = np.asarray(c, float)
    z = c * rho
    w = np.asarray(v, float) + pressure(law, rho, z)
    return make_state(rho, rho * w, z)


def velocity(law: PressureLaw, state: np.ndarray, *, floor: float = 0.0) -> np.ndarray:
    state = np.asarray(state, float)
    rho = state[..., 0]
    if floor <= 0.0 and not np.all(rho > 0.0):
        raise DomainError("velocity requires rho > 0")
    rho_safe = np.maximum(rho, floor) if floor > 0.0 else rho
    return state[..., 1] / rho_safe - pressure(law, rho, state[..., 2], floor=floor)


def flux(law: PressureLaw, state: np.ndarray) -> np.ndarray:
    """F(U) = v * U, componentwise."""
    v = velocity(law, state)
    return v[..., None] * np.asarray(state, float)


def eigen_speeds(law: PressureLaw, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(lambda_1, lambda_2) = (v - rho*p_rho - z*p_z, v); lambda_3 = lambda_2."""
    state = np.asarray(state, float)
    rho, z = state[..., 0], state[..., 2]
    _check_positive(rho, z, "eigen_speeds")
    v = velocity(law, state)
    p_rho, p_z = pressure_derivs(law, rho, z)
    return v - rho * p_rho - z * p_z, v


def spectral_radius(law: PressureLaw, state: np.ndarray) -> np.ndarray:
    lam1, lam2 = eigen_speeds(law, state)
    return np.maximum(np.abs(lam1), np.abs(lam2))


def alpha_bar(law: PressureLaw, state: np.ndarray) -> np.ndarray:
    """Propagation-speed estimate v + |rho*p_rho + z*p_z|."""
    state = np.asarray(state, float)
    rho, z = state[..., 0], state[..., 2]
    _check_positive(rho, z, "alpha_bar")
    v = velocity(law, state)
    p_rho, p_z = pressure_derivs(law, rho, z)
    return v + np.abs(rho * p_rho + z * p_z)


def speed_radius(law: PressureLaw, state: np.ndarray) -> np.ndarray:
    """|v| + |rho*p_rho + z*p_z|; dominates every eigenvalue regardless of
    the sign of v (equals alpha_bar whenever v >= 0)."""
    state = np.asarray(state, float)
    rho, z = state[..., 0], state[..., 2]
    _check_positive(rho, z, "speed_radius")
    v = velocity(law, state)
    p_rho, p_z = pressure_derivs(law, rho, z)
    return np.abs(v) + np.abs(rho * p_rho + z * p_z)


def s_value(law: PressureLaw, rho, z) -> np.ndarray:
    """s(rho, z) = rho^2 p_rho + rho z p_z (= v_ref*rho for gamma=0)."""
    rho = np.asarray(rho, float)
    z = np.asarray(z, float)
    _check_positive(rho, z, "s_value")
    if law.is_log:
        return law.v_ref * rho
    p_rho, p_z = pressure_derivs(law, rho, z)
    return rho * rho * p_rho + rho * z * p_z


def _s_bar(law: PressureLaw, rho_lo, rho_hi, z_hi, variant: SBarVariant) -> np.ndarray:
    if law.is_log:
        return law.v_ref * np.asarray(rho_hi, float)
    expo = law.gamma - law.kappa
    if variant is SBarVariant.EXACT:
        expo += 1.0
    return law.v_ref * np.asarray(z_hi, float) ** law.kappa * np.asarray(rho_lo, float) ** expo


@dataclass(frozen=True)
class SpeedEstimate:
    """Generalized-LF-safe speed bound for a pair of interface states."""

    alpha_std: float
    alpha_max: float
    s_bar: float
    rho_box: tuple[float, float]
    z_box: tuple[float, float]

    def __post_init__(self) -> None:
        if not (self.alpha_max >= self.alpha_std >= 0.0):
            raise ValueError("alpha_max >= alpha_std >= 0 violated")
        if self.rho_box[0] > self.rho_box[1] or self.z_box[0] > self.z_box[1]:
            raise ValueError("box bounds out of order")
        if self.s_bar < 0.0:
            raise ValueError("s_bar must be nonnegative")


def alpha_max_value(
    law: PressureLaw,
    u_hat: np.ndarray,
    u_check: np.ndarray,
    *,
    variant: SBarVariant = SBarVariant.STANDARD,
) -> np.ndarray:
    """Vectorized generalized-LF-safe speed for state pairs.

    alpha_max = max{alpha_std, |v_hat| + s_bar/rho_hat, |v_check| + s_bar/rho_check}
    with alpha_std the larger alpha_bar of the pair and s_bar the s-bound over
    the box spanned by the midpoint and flux-shifted midpoint of (rho, z).
    """
    u_hat = np.asarray(u_hat, float)
    u_check = np.asarray(u_check, float)
    a_std = np.maximum(alpha_bar(law, u_hat), alpha_bar(law, u_check))
    v_hat = velocity(law, u_hat)
    v_check = velocity(law, u_check)
    rho_hat, z_hat = u_hat[..., 0], u_hat[..., 2]
    rho_chk, z_chk = u_check[..., 0], u_check[..., 2]

    rho1 = 0.5 * (rho_hat + rho_chk)
    rho2 = rho1 + (rho_hat * v_hat - rho_chk * v_check) / (2.0 * a_std)
    z1 = 0.5 * (z_hat + z_chk)
    z2 = z1 + (z_hat * v_hat - z_chk * v_check) / (2.0 * a_std)
    rho_lo, rho_hi = np.minimum(rho1, rho2), np.maximum(rho1, rho2)
    z_hi = np.maximum(z1, z2)
    s_bar = _s_bar(law, rho_lo, rho_hi, z_hi, variant)
    return np.maximum(
        a_std,
        np.maximum(np.abs(v_hat) + s_bar / rho_hat, np.abs(v_check) + s_bar / rho_chk),
    )


def alpha_max(
    law: PressureLaw,
    u_hat: np.ndarray,
    u_check: np.ndarray,
    *,
    variant: SBarVariant = SBarVariant.STANDARD,
) -> SpeedEstimate:
    """Full speed estimate (with boxes) for a single pair of states."""
    u_hat = np.asarray(u_hat, float)
    u_check = np.asarray(u_check, float)
    a_std = float(np.maximum(alpha_bar(law, u_hat), alpha_bar(law, u_check)))
    v_hat = float(velocity(law, u_hat))
    v_check = float(velocity(law, u_check))
    rho_hat, z_hat = float(u_hat[..., 0]), float(u_hat[..., 2])
    rho_chk, z_chk = float(u_check[..., 0]), float(u_check[..., 2])

    rho1 = 0.5 * (rho_hat + rho_chk)
    rho2 = rho1 + (rho_hat * v_hat - rho_chk * v_check) / (2.0 * a_std)
    z1 = 0.5 * (z_hat + z_chk)
    z2 = z1 + (z_hat * v_hat - z_chk * v_check) / (2.0 * a_std)
    rho_box = (min(rho1, rho2), max(rho1, rho2))
    z_box = (min(z1, z2), max(z1, z2))
    if rho_box[0] <= 0.0:
        # flux shift can push the box edge to nonpositive density for wild
        # pairs; the s-bound then degenerates and only alpha_std is usable
        raise DomainError("alpha_max: density box left the positive quadrant")
    s_bar = float(_s_bar(law, rho_box[0], rho_box[1], z_box[1], variant))
    a_max = max(a_std, abs(v_hat) + s_bar / rho_hat, abs(v_check) + s_bar / rho_chk)
    return SpeedEstimate(alpha_std=a_std, alpha_max=a_max, s_bar=s_bar, rho_box=rho_box, z_box=z_box)


def in_omega0(state: np.ndarray) -> np.ndarray:
    """Elementwise membership in {rho > 0, z > 0}."""
    state = np.asarray(state, float)
    return (state[..., 0] > 0.0) & (state[..., 2] > 0.0)


def assert_finite(state: np.ndarray, what: str = "state") -> None:
    if not np.all(np.isfinite(state)):
        raise DomainError(f"{what} has nonfinite components")
