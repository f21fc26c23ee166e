"""Invariant-domain machinery: membership, GQL witnesses, LF splitting,
and global/local bound estimation for the Riemann invariants (v, w, c).

An InvariantBox holds the bounds (v_min, w_min, w_max, c_min, c_max);
membership additionally requires rho > 0 and z > 0. Bounds may be scalars
(one domain for the whole mesh) or per-cell arrays; all operations
broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import mesh as msh
from .model import DomainError, PressureLaw, flux, pressure, pressure_derivs, primitives, s_value

__all__ = [
    "InvariantBox",
    "GqlCertificate",
    "Membership",
    "h_gap",
    "eta",
    "member",
    "gql_certificate",
    "gql_check",
    "glf_average",
    "lf_split",
    "estimate_global_box",
    "update_global_box",
    "cubic_range",
    "vicinity_bounds",
    "relax_bounds",
    "combine_stage_boxes",
]

SLACK_NAMES = ("rho", "z", "w_min", "w_max", "c_min", "c_max", "v_min")


@dataclass(frozen=True)
class InvariantBox:
    """Bounds on the Riemann invariants; rho > 0 and z > 0 are implicit."""

    v_min: np.ndarray | float
    w_min: np.ndarray | float
    w_max: np.ndarray | float
    c_min: np.ndarray | float
    c_max: np.ndarray | float

    def __post_init__(self) -> None:
        for lo, hi, name in ((self.w_min, self.w_max, "w"), (self.c_min, self.c_max, "c")):
            if np.any(np.asarray(lo) > np.asarray(hi)):
                raise ValueError(f"{name}_min > {name}_max")
        for f in (self.v_min, self.w_min, self.w_max, self.c_min, self.c_max):
            if not np.all(np.isfinite(f)):
                raise ValueError("box bounds must be finite")

    def widen(self, v_min, w_min, w_max, c_min, c_max) -> "InvariantBox":
        """Smallest box containing self and the given invariant values."""
        return InvariantBox(
            v_min=np.minimum(self.v_min, np.min(v_min)),
            w_min=np.minimum(self.w_min, np.min(w_min)),
            w_max=np.maximum(self.w_max, np.max(w_max)),
            c_min=np.minimum(self.c_min, np.min(c_min)),
            c_max=np.maximum(self.c_max, np.max(c_max)),
        )

    def intersect(self, other: "InvariantBox") -> "InvariantBox":
        out = InvariantBox.__new__(InvariantBox)
        object.__setattr__(out, "v_min", np.maximum(self.v_min, other.v_min))
        object.__setattr__(out, "w_min", np.maximum(self.w_min, other.w_min))
        object.__setattr__(out, "w_max", np.minimum(self.w_max, other.w_max))
        object.__setattr__(out, "c_min", np.maximum(self.c_min, other.c_min))
        object.__setattr__(out, "c_max", np.minimum(self.c_max, other.c_max))
        return out

    def hull(self, other: "InvariantBox") -> "InvariantBox":
        """Componentwise bounding box of the union."""
        return InvariantBox(
            v_min=np.minimum(self.v_min, other.v_min),
            w_min=np.minimum(self.w_min, other.w_min),
            w_max=np.maximum(self.w_max, other.w_max),
            c_min=np.minimum(self.c_min, other.c_min),
            c_max=np.maximum(self.c_max, other.c_max),
        )

    def contains_box(self, other: "InvariantBox", tol: float = 0.0) -> bool:
        return bool(
            np.all(np.asarray(self.v_min) <= np.asarray(other.v_min) + tol)
            and np.all(np.asarray(self.w_min) <= np.asarray(other.w_min) + tol)
            and np.all(np.asarray(self.w_max) >= np.asarray(other.w_max) - tol)
            and np.all(np.asarray(self.c_min) <= np.asarray(other.c_min) + tol)
            and np.all(np.asarray(self.c_max) >= np.asarray(other.c_max) - tol)
        )


@dataclass(frozen=True)
class GqlCertificate:
    """Linearization witness: normal/offset of one GQL half-space."""

    n_star: np.ndarray
    s_star: float
    witness: tuple[float, float]


@dataclass(frozen=True)
class Membership:
    ok: np.ndarray | bool
    slacks: dict[str, np.ndarray]

    def worst(self) -> float:
        return float(min(np.min(s) for s in self.slacks.values()))


def h_gap(law: PressureLaw, rho_star, z_star, rho, z) -> np.ndarray:
    """Tangent-plane gap of the pressure surface; nonnegative on the
    positive quadrant with equality at (rho_star, z_star) = (rho, z)."""
    rho_star = np.asarray(rho_star, float)
    z_star = np.asarray(z_star, float)
    rho = np.asarray(rho, float)
    z = np.asarray(z, float)
    if np.any(rho_star <= 0) or np.any(z_star <= 0) or np.any(rho <= 0) or np.any(z <= 0):
        raise DomainError("h_gap requires positive arguments")
    p_r, p_z = pressure_derivs(law, rho_star, z_star)
    return rho * (pressure(law, rho, z) - pressure(law, rho_star, z_star)) + rho_star * (
        (rho_star - rho) * p_r + (z_star - z) * p_z
    )


def eta(law: PressureLaw, v_min, rho, z) -> np.ndarray:
    """eta(rho, z) = rho*(v_min + p); v(U) >= v_min iff y >= eta."""
    rho = np.asarray(rho, float)
    return rho * (np.asarray(v_min, float) + pressure(law, rho, z))


def member(box: InvariantBox, law: PressureLaw, state: np.ndarray, tol: float = 1e-12) -> Membership:
    """Per-constraint slacks of a state against the box.

    Slacks for (w, c, v) are reported in invariant units and only where
    rho > 0 (set to nan otherwise, with the verdict already false there).
    """
    state = np.asarray(state, float)
    rho, y, z = state[..., 0], state[..., 1], state[..., 2]
    pos = rho > 0.0
    p_defined = pos if law.is_log else pos & (z > 0.0)
    rho_safe = np.where(pos, rho, 1.0)
    w = np.where(pos, y / rho_safe, np.nan)
    c = np.where(pos, z / rho_safe, np.nan)
    p = np.where(
        p_defined, pressure(law, rho_safe, np.where(z > 0.0, z, 1.0)), np.nan
    )
    v = w - p
    slacks = {
        "rho": rho + 0.0,
        "z": z + 0.0,
        "w_min": w - box.w_min,
        "w_max": box.w_max - w,
        "c_min": c - box.c_min,
        "c_max": box.c_max - c,
        "v_min": v - box.v_min,
    }
    ok = (rho > 0.0) & (z > 0.0)
    for name in ("w_min", "w_max", "c_min", "c_max", "v_min"):
        ok = ok & (slacks[name] >= -tol)
    return Membership(ok=ok, slacks=slacks)


def gql_certificate(law: PressureLaw, v_min: float, rho_star: float, z_star: float) -> GqlCertificate:
    """Half-space normal n* = -(v_min + p + rho*p_rho, -1, rho*p_z) and
    offset s* = rho^2 p_rho + rho z p_z at the witness."""
    p = float(pressure(law, rho_star, z_star))
    p_r, p_z = pressure_derivs(law, rho_star, z_star)
    n_star = -np.array([v_min + p + rho_star * float(p_r), -1.0, rho_star * float(p_z)])
    s_star = float(s_value(law, rho_star, z_star))
    return GqlCertificate(n_star=n_star, s_star=s_star, witness=(rho_star, z_star))


def gql_check(
    box: InvariantBox, law: PressureLaw, state: np.ndarray, witnesses: np.ndarray
) -> float:
    """Worst linear slack min over witnesses of U.n* + s*.

    For members of the v >= v_min half this is >= rho*(v - v_min) >= 0;
    the self-witness (rho, z) attains rho*(v - v_min) exactly.
    """
    state = np.asarray(state, float)
    witnesses = np.atleast_2d(np.asarray(witnesses, float))
    if np.any(witnesses <= 0):
        raise DomainError("gql_check witnesses must be positive")
    rho_s, z_s = witnesses[:, 0], witnesses[:, 1]
    p = pressure(law, rho_s, z_s)
    p_r, p_z = pressure_derivs(law, rho_s, z_s)
    n0 = -(np.asarray(box.v_min, float) + p + rho_s * p_r)
    n2 = -(rho_s * p_z)
    s_star = s_value(law, rho_s, z_s)
    slacks = state[..., 0, None] * n0 + state[..., 1, None] + state[..., 2, None] * n2 + s_star
    return slacks.min(axis=-1)


def glf_average(law: PressureLaw, u_hat: np.ndarray, u_check: np.ndarray, alpha: float) -> np.ndarray:
    """0.5*[U_hat + F(U_hat)/alpha + U_check - F(U_check)/alpha]."""
    if not alpha > 0:
        raise DomainError("glf_average requires alpha > 0")
    return 0.5 * (
        np.asarray(u_hat, float)
        + flux(law, u_hat) / alpha
        + np.asarray(u_check, float)
        - flux(law, u_check) / alpha
    )


def lf_split(law: PressureLaw, state: np.ndarray, alpha: float, sign: int) -> np.ndarray:
    """U + sign*F(U)/alpha."""
    if not alpha > 0:
        raise DomainError("lf_split requires alpha > 0")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return np.asarray(state, float) + sign * flux(law, state) / alpha


def estimate_global_box(
    law: PressureLaw, sampler, x_left: float, x_right: float, n_samples: int, eps0: float
) -> InvariantBox:
    """Initial global domain from invariant extrema over a uniform sampling
    mesh, expanded by eps0; v_min is clamped at 0 from below.

    Sample points where the piecewise-polynomial data leaves the positive
    quadrant (projection undershoot near vacuum) carry no invariant values
    and are skipped.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = np.linspace(x_left, x_right, n_samples)
    states = np.atleast_2d(np.asarray(sampler(x), float))
    rho, y, z = states[..., 0], states[..., 1], states[..., 2]
    # raw invariant ratios: where piecewise-polynomial data touches or
    # crosses zero density, w and c legitimately blow up and the estimated
    # bounds degenerate to very wide ones, neutralizing those constraints
    # near vacuum (where Riemann invariants are undefined anyway)
    nz = rho != 0.0
    if not np.any(nz):
        raise DomainError("initial data is identically zero-density")
    rho_s = np.where(nz, rho, 1.0)
    w = (y / rho_s)[nz]
    c = (z / rho_s)[nz]
    p_ok = (rho > 0.0) if law.is_log else (rho > 0.0) & (z > 0.0)
    if not np.any(p_ok):
        raise DomainError("no sample of the initial data lies in the positive quadrant")
    p_vals = pressure(law, np.where(p_ok, rho, 1.0), np.where(z > 0.0, z, 1.0))
    v = (y / rho_s - p_vals)[p_ok]
    w = w[np.isfinite(w)]
    c = c[np.isfinite(c)]
    v = v[np.isfinite(v)]
    if w.size == 0 or c.size == 0 or v.size == 0:
        raise DomainError("initial data yields no finite invariant samples")
    return InvariantBox(
        v_min=max(float(v.min()) - eps0, 0.0),
        w_min=float(w.min()) - eps0,
        w_max=float(w.max()) + eps0,
        c_min=float(c.min()) - eps0,
        c_max=float(c.max()) + eps0,
    )


def update_global_box(box: InvariantBox, law: PressureLaw, boundary_states: np.ndarray) -> InvariantBox:
    """Widen the global domain by the exterior boundary states (both ends)."""
    states = np.atleast_2d(np.asarray(boundary_states, float))
    if np.any(states[:, 0] <= 0.0) or np.any(states[:, 2] <= 0.0):
        raise DomainError("boundary states must have rho > 0 and z > 0")
    _, v, w, c = primitives(law, states)
    return box.widen(v, w, w, c, c)


# four equispaced interpolation nodes on the reference cell
CUBIC_NODES = np.array([-0.5, -1.0 / 6.0, 1.0 / 6.0, 0.5])
_VANDER_INV = np.linalg.inv(np.vander(CUBIC_NODES, 4, increasing=True))


def cubic_range(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(min, max) over [-1/2, 1/2] of the cubic through the four node values.

    values: (..., 4) samples at CUBIC_NODES. Extrema from the endpoints and
    the closed-form roots of the derivative quadratic.
    """
    values = np.asarray(values, float)
    coef = values @ _VANDER_INV.T  # a0 + a1 x + a2 x^2 + a3 x^3
    a1, a2, a3 = coef[..., 1], coef[..., 2], coef[..., 3]
    lo = np.minimum(values[..., 0], values[..., -1])
    hi = np.maximum(values[..., 0], values[..., -1])

    # critical points of the cubic: 3 a3 x^2 + 2 a2 x + a1 = 0
    a = 3.0 * a3
    b = 2.0 * a2
    scale = np.maximum(np.abs(a), np.maximum(np.abs(b), np.abs(a1)))
    quad = np.abs(a) > 1e-14 * np.maximum(scale, 1e-300)
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = b * b - 4.0 * a * a1
        sq = np.sqrt(np.maximum(disc, 0.0))
        # numerically stable quadratic roots
        qq = -0.5 * (b + np.sign(b + (b == 0)) * sq)
        r1 = np.where(quad & (disc >= 0), qq / np.where(a == 0, 1.0, a), np.nan)
        r2 = np.where(quad & (disc >= 0) & (qq != 0), a1 / np.where(qq == 0, 1.0, qq), np.nan)
        lin = (~quad) & (np.abs(b) > 1e-14 * np.maximum(scale, 1e-300))
        r3 = np.where(lin, -a1 / np.where(lin, b, 1.0), np.nan)
    for r in (r1, r2, r3):
        inside = np.isfinite(r) & (np.abs(r) <= 0.5)
        if not np.any(inside):
            continue
        rr = np.where(inside, r, 0.0)
        val = coef[..., 0] + rr * (coef[..., 1] + rr * (coef[..., 2] + rr * coef[..., 3]))
        lo = np.where(inside, np.minimum(lo, val), lo)
        hi = np.where(inside, np.maximum(hi, val), hi)
    return lo, hi


def relax_bounds(lo: np.ndarray, hi: np.ndarray, sqrt_dx: float) -> tuple[np.ndarray, np.ndarray]:
    """bound -/+ sqrt(dx)*|bound|, applied literally whatever the sign."""
    return lo - sqrt_dx * np.abs(lo), hi + sqrt_dx * np.abs(hi)


@lru_cache(maxsize=None)
def _vicinity_node_cache(gl_key: tuple[float, ...]):
    gl_nodes = np.asarray(gl_key, float)
    nodes = np.unique(np.concatenate([gl_nodes, CUBIC_NODES]))
    gl_ix = np.searchsorted(nodes, gl_nodes)
    cub_ix = np.searchsorted(nodes, CUBIC_NODES)
    left_ix = int(np.searchsorted(nodes, -0.5))
    right_ix = int(np.searchsorted(nodes, 0.5))
    return nodes, gl_ix, cub_ix, left_ix, right_ix


VACUUM_RELAX = 3.0


def vicinity_bounds(
    law: PressureLaw,
    coeffs: np.ndarray,
    dx: float,
    exterior_left: np.ndarray,
    exterior_right: np.ndarray,
    gl_nodes: np.ndarray,
    *,
    return_meaningful: bool = False,
):
    """Relaxed per-cell box from GL-node values, cubic-interpolant extrema,
    and neighbor-side edge traces of the broken solution.

    coeffs: (n_cells, 3, k+1); exterior_*: exterior boundary trace states.
    With return_meaningful, also returns the mask of cells that offered at
    least one above-vacuum probe (invariant bounds elsewhere are noise).
    """
    nodes, gl_ix, cub_ix, left_ix, right_ix = _vicinity_node_cache(tuple(np.asarray(gl_nodes, float)))
    vals = msh.eval_poly(coeffs, nodes)  # (n, 3, n_pts)
    states = np.moveaxis(vals, 1, -1)  # (n, n_pts, 3)
    _, v, w, c = primitives(law, states, floor=1e-14)

    # ratio invariants are meaningless at or below vacuum: such probe
    # values are dropped from the extremum search whenever the cell offers
    # any meaningful probe, keeping the local bounds tight next to vacuum
    # fronts; probes of all-vacuum cells are kept (a consistent vacuum
    # state still carries finite marker ratios)
    thresh = 1e-6 * max(float(coeffs[:, 0, 0].max()), 1e-300)
    valid = states[..., 0] > thresh  # (n, n_pts)
    any_valid = valid.any(axis=1)
    use = np.where(any_valid[:, None], valid, True)[None]  # (1, n, n_pts)

    quant = np.stack([v, w, c])  # (3, n, n_pts)
    q_lo = np.where(use, quant, np.inf)
    q_hi = np.where(use, quant, -np.inf)
    lo3 = q_lo[:, :, gl_ix].min(axis=2)
    hi3 = q_hi[:, :, gl_ix].max(axis=2)
    lo3 = np.minimum(lo3, q_lo[:, :, cub_ix].min(axis=2))
    hi3 = np.maximum(hi3, q_hi[:, :, cub_ix].max(axis=2))

    # the cell's own average is part of the vicinity data; including its
    # invariants guarantees the limiting hypothesis for the box built here
    # (vacuum-cell marker ratios drift at round-off-amplified scale)
    _, v0, w0, c0 = primitives(law, coeffs[:, :, 0], floor=1e-14)
    avg3 = np.stack([v0, w0, c0])
    lo3 = np.minimum(lo3, avg3)
    hi3 = np.maximum(hi3, avg3)

    # cubic-interpolant extrema only where every interpolation node is
    # meaningful (a cubic through vacuum-ratio garbage is garbage)
    cub_ok = valid[:, cub_ix].all(axis=1) | ~any_valid
    c_lo, c_hi = cubic_range(quant[:, :, cub_ix])
    lo3 = np.where(cub_ok[None, :], np.minimum(lo3, c_lo), lo3)
    hi3 = np.where(cub_ok[None, :], np.maximum(hi3, c_hi), hi3)

    lows = {"v": lo3[0], "w": lo3[1], "c": lo3[2]}
    highs = {"v": hi3[0], "w": hi3[1], "c": hi3[2]}

    # neighbor-side traces at the shared interfaces: the right neighbor's
    # left-end value and the left neighbor's right-end value
    left_val = vals[:, :, left_ix]  # (n, 3) value at cell left end
    right_val = vals[:, :, right_ix]
    nb_right = np.concatenate([left_val[1:], np.asarray(exterior_right, float)[None, :]], axis=0)
    nb_left = np.concatenate([np.asarray(exterior_left, float)[None, :], right_val[:-1]], axis=0)
    for nb in (nb_right, nb_left):
        _, v_n, w_n, c_n = primitives(law, nb, floor=1e-14)
        ok = (nb[:, 0] > thresh) | ~any_valid
        for name, q in (("v", v_n), ("w", w_n), ("c", c_n)):
            lows[name] = np.where(ok, np.minimum(lows[name], q), lows[name])
            highs[name] = np.where(ok, np.maximum(highs[name], q), highs[name])

    # meaningful cells use the sharp sqrt(dx) relaxation; all-vacuum cells
    # get a fixed wide factor: their ratio bounds must stay finite (they
    # tether y to rho, which the scheme's stability needs) but loose enough
    # to absorb the round-off-amplified drift of 0/0 invariants
    s = np.where(any_valid, np.sqrt(dx), VACUUM_RELAX)
    v_lo, _ = relax_bounds(lows["v"], highs["v"], s)
    w_lo, w_hi = relax_bounds(lows["w"], highs["w"], s)
    c_lo, c_hi = relax_bounds(lows["c"], highs["c"], s)
    box = InvariantBox(v_min=v_lo, w_min=w_lo, w_max=w_hi, c_min=c_lo, c_max=c_hi)
    if return_meaningful:
        return box, any_valid
    return box


def combine_stage_boxes(
    global_box: InvariantBox,
    vicinity: InvariantBox,
    prev_cell_boxes: InvariantBox | None,
    meaningful: np.ndarray | None = None,
) -> InvariantBox:
    """Per-cell stage domain: first stage intersects the global domain with
    the vicinity box; later stages intersect with the bounding box of the
    union of the previous cell box and the fresh vicinity box.

    The meaningful mask is currently informational: the global intersection
    applies everywhere (dropping it at vacuum cells unleashes their ratio
    noise into the traces and destabilizes the LF fluxes); averages that
    drift out of the resulting box are readmitted by the limiter, which
    reports every such event.
    """
    local = vicinity if prev_cell_boxes is None else prev_cell_boxes.hull(vicinity)
    return _intersect_lenient(global_box, local)


def _intersect_lenient(a: InvariantBox, b: InvariantBox) -> InvariantBox:
    out = a.intersect(b)
    # an empty intersection (possible only through round-off at box edges)
    # collapses to the midpoint rather than an invalid box
    w_lo, w_hi = np.minimum(out.w_min, out.w_max), np.maximum(out.w_min, out.w_max)
    c_lo, c_hi = np.minimum(out.c_min, out.c_max), np.maximum(out.c_min, out.c_max)
    fixed = InvariantBox.__new__(InvariantBox)
    object.__setattr__(fixed, "v_min", out.v_min)
    object.__setattr__(fixed, "w_min", w_lo)
    object.__setattr__(fixed, "w_max", w_hi)
    object.__setattr__(fixed, "c_min", c_lo)
    object.__setattr__(fixed, "c_max", c_hi)
    return fixed
