"""Road networks: junction coupling conditions and the synchronized
multi-road time loop.

Junction fluxes are allocated from demand (sending capacity of incoming
road ends) and supply (receiving capacity of outgoing ends) through the
distribution matrix and a priority vector: fixed priorities for the
adapted-pressure coupling, demand-proportional priorities for the
classic one. Each road end then receives an exterior ghost state (used
for invariant-domain updates, damping jumps, and speed estimates) and a
prescribed interface flux q*(1, w, c) which the DG operator imposes
directly, making junction transfer exactly conservative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dg
from .model import DomainError, PressureLaw, make_state, pressure, primitives
from .stepper import RoadSolver, _RetryStep, RK_FLUX_WEIGHTS

__all__ = [
    "Junction",
    "JunctionResolution",
    "Network",
    "demand",
    "supply",
    "critical_density",
    "max_flux",
    "ghost_from_flux",
    "resolve_junction",
]

RHO_VACUUM = 1e-10
FLUX_TOL = 1e-14


# ------------------------------------------------------------------ diagram


def _frozen_flux(law: PressureLaw, rho, w, c):
    """q(rho) = rho*(w - p(rho, c*rho)) with the markers frozen."""
    rho = np.asarray(rho, float)
    return rho * (w - pressure(law, rho, c * rho))


def critical_density(law: PressureLaw, w: float, c: float) -> float:
    """Argmax of the frozen-marker flux curve; 0 when the curve is empty."""
    if law.is_log:
        return float(np.exp(w / law.v_ref - 1.0))
    if w <= 0.0:
        return 0.0
    return float((law.gamma * w / (law.v_ref * (law.gamma + 1.0) * c**law.kappa)) ** (1.0 / law.gamma))


def jam_density(law: PressureLaw, w: float, c: float) -> float:
    """Density at which the frozen-marker velocity w - p reaches zero."""
    if law.is_log:
        return float(np.exp(w / law.v_ref))
    if w <= 0.0:
        return 0.0
    return float((law.gamma * w / (law.v_ref * c**law.kappa)) ** (1.0 / law.gamma))


def max_flux(law: PressureLaw, w: float, c: float) -> float:
    rho_c = critical_density(law, w, c)
    if rho_c <= 0.0:
        return 0.0
    return max(float(_frozen_flux(law, rho_c, w, c)), 0.0)


def _trace_wc(law: PressureLaw, state: np.ndarray) -> tuple[float, float, float, float]:
    rho, v, w, c = primitives(law, np.asarray(state, float))
    return float(rho), float(v), float(w), float(c)


def demand(law: PressureLaw, state: np.ndarray) -> float:
    """Sending capacity of an incoming road end: the trace flux in free
    flow, the diagram maximum when congested."""
    rho, v, w, c = _trace_wc(law, state)
    rho_c = critical_density(law, w, c)
    if rho <= rho_c:
        return max(rho * v, 0.0)
    return max_flux(law, w, c)


def supply(law: PressureLaw, state: np.ndarray) -> float:
    """Receiving capacity of an outgoing road end: the diagram maximum in
    free flow, the trace flux when congested."""
    rho, v, w, c = _trace_wc(law, state)
    rho_c = critical_density(law, w, c)
    if rho <= rho_c:
        return max_flux(law, w, c)
    return max(rho * v, 0.0)


def ghost_from_flux(
    law: PressureLaw, q: float, w: float, c: float, side: str
) -> tuple[np.ndarray, bool]:
    """State with markers (w, c) whose physical flux equals q, on the
    free-flow branch ("free", outgoing entries) or congested branch
    ("congested", incoming exits). Returns (state, saturated): saturated
    marks q above the diagram maximum (the argmax state is returned).
    """
    if side not in ("free", "congested"):
        raise ValueError("side must be 'free' or 'congested'")
    if q < -FLUX_TOL:
        raise DomainError("ghost flux must be nonnegative")
    if c <= 0.0:
        raise DomainError("ghost label must be positive")
    if q <= FLUX_TOL:
        rho = RHO_VACUUM
        return make_state(rho, rho * w, c * rho), False

    rho_c = critical_density(law, w, c)
    q_cap = max_flux(law, w, c)
    if rho_c <= 0.0 or q_cap <= 0.0:
        # empty diagram cannot transmit a positive flux
        rho = RHO_VACUUM
        return make_state(rho, rho * w, c * rho), True
    if q >= q_cap * (1.0 - 1e-13):
        return make_state(rho_c, rho_c * w, c * rho_c), q > q_cap * (1.0 + 1e-10)

    if side == "free":
        lo, hi = RHO_VACUUM * 1e-6, rho_c
    else:
        lo, hi = rho_c, jam_density(law, w, c)
    # safeguarded bisection on the monotone branch (64 halvings reach
    # relative machine precision)
    f_lo = float(_frozen_flux(law, lo, w, c)) - q
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = float(_frozen_flux(law, mid, w, c)) - q
        if (f_mid <= 0.0) == (f_lo <= 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(hi, 1.0):
            break
    rho = 0.5 * (lo + hi)
    return make_state(rho, rho * w, c * rho), False


# --------------------------------------------------------------- junctions


@dataclass(frozen=True)
class Junction:
    """Topology and routing data of one junction."""

    id: str
    incoming: tuple[int, ...]
    outgoing: tuple[int, ...]
    distribution: np.ndarray  # (n_out, n_in), columns sum to 1
    kind: str = "hb"  # "hb" (demand priorities) or "ghmw" (fixed priorities)
    priority: np.ndarray | None = None  # (n_in,), required for ghmw merges

    def __post_init__(self) -> None:
        a = np.asarray(self.distribution, float)
        if a.shape != (len(self.outgoing), len(self.incoming)):
            raise ValueError(f"junction {self.id}: distribution shape {a.shape} mismatch")
        if np.any(a < -1e-15) or np.any(a > 1.0 + 1e-15):
            raise ValueError(f"junction {self.id}: distribution entries outside [0, 1]")
        if not np.allclose(a.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError(f"junction {self.id}: distribution columns must sum to 1")
        if self.kind not in ("hb", "ghmw"):
            raise ValueError(f"junction {self.id}: unknown kind {self.kind!r}")
        if self.priority is not None:
            b = np.asarray(self.priority, float)
            if b.shape != (len(self.incoming),) or np.any(b < 0):
                raise ValueError(f"junction {self.id}: bad priority vector")
            if not np.isclose(b.sum(), 1.0, atol=1e-12):
                raise ValueError(f"junction {self.id}: priorities must sum to 1")
        if self.kind == "ghmw" and self.priority is None and len(self.incoming) > 1:
            raise ValueError(f"junction {self.id}: ghmw merge needs a priority vector")


@dataclass
class JunctionResolution:
    """Allocated fluxes, ghost traces, and prescribed interface fluxes."""

    q_in: np.ndarray  # (n_in,) total flux leaving each incoming road
    q_matrix: np.ndarray  # (n_out, n_in), q_ji = a_ji * q_i
    q_out: np.ndarray  # (n_out,)
    ghosts_in: list  # exterior states at incoming exits
    ghosts_out: list  # exterior states at outgoing entries
    flux_in: list  # prescribed interface flux vectors at incoming exits
    flux_out: list
    mixtures: list  # (w, c) transported into each outgoing road
    saturated: bool = False


def allocate(
    demands: np.ndarray, supplies: np.ndarray, a: np.ndarray, beta: np.ndarray
) -> np.ndarray:
    """Proportional water-filling: raise the incoming fluxes along the
    priority direction until demands or routed supplies saturate.

    Returns q (n_in,) with q <= demands and a @ q <= supplies, maximizing
    throughput under the proportional-priority rule.
    """
    m = len(demands)
    q = np.zeros(m)
    for _ in range(m + len(supplies) + 2):
        active = q < demands - 1e-15 * np.maximum(demands, 1.0)
        if not np.any(active):
            break
        shares = np.where(active, beta, 0.0)
        total = shares.sum()
        if total <= 0.0:
            # zero-priority residual: split equally among the active
            shares = active.astype(float)
            total = shares.sum()
        shares = shares / total
        cap = supplies - a @ q
        routed = a @ shares
        with np.errstate(divide="ignore"):
            lam_supply = np.where(routed > 1e-300, cap / routed, np.inf)
        lam_demand = np.where(active, (demands - q) / np.where(shares > 0, shares, 1.0), np.inf)
        lam_demand = np.where(shares > 0, lam_demand, np.inf)
        lam = min(float(lam_supply.min()), float(lam_demand.min()))
        if not np.isfinite(lam) or lam <= 1e-18:
            break
        q = q + shares * lam
    q = np.minimum(q, demands)
    return np.maximum(q, 0.0)


def resolve_junction(
    junction: Junction,
    traces_in: list[np.ndarray],
    traces_out: list[np.ndarray],
    laws_in: list[PressureLaw],
    laws_out: list[PressureLaw],
) -> JunctionResolution:
    """Allocate fluxes and construct exterior data for every connected end."""
    d = np.array([demand(law, tr) for law, tr in zip(laws_in, traces_in)])
    s = np.array([supply(law, tr) for law, tr in zip(laws_out, traces_out)])
    a = np.asarray(junction.distribution, float)

    if junction.kind == "ghmw" and junction.priority is not None:
        beta = np.asarray(junction.priority, float)
    else:
        total = d.sum()
        beta = d / total if total > 0.0 else np.zeros_like(d)

    q_in = allocate(d, s, a, beta) if d.sum() > 0.0 else np.zeros_like(d)
    q_matrix = a * q_in[None, :]
    q_out = q_matrix.sum(axis=1)

    w_in, c_in = [], []
    for law, tr in zip(laws_in, traces_in):
        _, _, w, c = primitives(law, tr)
        w_in.append(float(w))
        c_in.append(float(c))

    ghosts_in, flux_in = [], []
    saturated = False
    for i, (law, tr) in enumerate(zip(laws_in, traces_in)):
        rho_i = float(tr[0])
        free = rho_i <= critical_density(law, w_in[i], c_in[i])
        if free and q_in[i] >= d[i] * (1.0 - 1e-12):
            # unconstrained outflow: characteristics leave, the exit is
            # transparent and the exterior mirrors the interior trace
            ghosts_in.append(np.asarray(tr, float).copy())
        else:
            g, sat = ghost_from_flux(law, float(q_in[i]), w_in[i], c_in[i], "congested")
            saturated |= sat
            ghosts_in.append(g)
        flux_in.append(q_in[i] * np.array([1.0, w_in[i], c_in[i]]))

    ghosts_out, flux_out, mixtures = [], [], []
    for j, (law, tr) in enumerate(zip(laws_out, traces_out)):
        if q_out[j] > FLUX_TOL:
            w_mix = float(np.dot(q_matrix[j], w_in) / q_out[j])
            c_mix = float(np.dot(q_matrix[j], c_in) / q_out[j])
        else:
            _, _, w_own, c_own = primitives(law, tr)
            w_mix, c_mix = float(w_own), float(c_own)
        mixtures.append((w_mix, c_mix))
        _, _, w_own, c_own = primitives(law, tr)
        congested = float(tr[0]) > critical_density(law, float(w_own), float(c_own))
        if congested and q_out[j] >= s[j] * (1.0 - 1e-12) and s[j] > FLUX_TOL:
            ghosts_out.append(np.asarray(tr, float).copy())
        else:
            g, sat = ghost_from_flux(law, float(q_out[j]), w_mix, c_mix, "free")
            saturated |= sat
            ghosts_out.append(g)
        flux_out.append(q_out[j] * np.array([1.0, w_mix, c_mix]))

    return JunctionResolution(
        q_in=q_in, q_matrix=q_matrix, q_out=q_out,
        ghosts_in=ghosts_in, ghosts_out=ghosts_out,
        flux_in=flux_in, flux_out=flux_out,
        mixtures=mixtures, saturated=saturated,
    )


# ----------------------------------------------------------------- network


@dataclass
class Network:
    """Roads keyed by id plus junction topology; every road carries its own
    pressure law, mesh, and invariant-domain bookkeeping."""

    roads: dict[int, RoadSolver]
    junctions: list[Junction]
    t: float = 0.0
    resolutions: dict[str, JunctionResolution] = field(default_factory=dict)
    steps: int = 0
    saturated_resolutions: int = 0

    def __post_init__(self) -> None:
        seen: dict[tuple[int, str], str] = {}
        for jc in self.junctions:
            for r in jc.incoming:
                key = (r, "down")
                if key in seen or r not in self.roads:
                    raise ValueError(f"road {r} downstream end wired twice or missing")
                seen[key] = jc.id
            for r in jc.outgoing:
                key = (r, "up")
                if key in seen or r not in self.roads:
                    raise ValueError(f"road {r} upstream end wired twice or missing")
                seen[key] = jc.id

    # -- junction plumbing -------------------------------------------------

    def _resolve_all(self, solutions: dict[int, np.ndarray]) -> None:
        self.resolutions = {}
        for jc in self.junctions:
            traces_in = []
            for r in jc.incoming:
                _, right = dg.traces(solutions[r])
                traces_in.append(right[-1])
            traces_out = []
            for r in jc.outgoing:
                left, _ = dg.traces(solutions[r])
                traces_out.append(left[0])
            res = resolve_junction(
                jc, traces_in, traces_out,
                [self.roads[r].law for r in jc.incoming],
                [self.roads[r].law for r in jc.outgoing],
            )
            if res.saturated:
                self.saturated_resolutions += 1
            self.resolutions[jc.id] = res
            for i, r in enumerate(jc.incoming):
                bc = self.roads[r].bc
                bc.right_state = res.ghosts_in[i]
                bc.right_flux = res.flux_in[i]
            for j, r in enumerate(jc.outgoing):
                bc = self.roads[r].bc
                bc.left_state = res.ghosts_out[j]
                bc.left_flux = res.flux_out[j]

    # -- time stepping -----------------------------------------------------

    def select_dt(self, t_end: float | None = None) -> tuple[float, float]:
        alpha = max(road.stage_alpha(road.coeffs) for _, road in sorted(self.roads.items()))
        dx_min = min(road.mesh.dx for road in self.roads.values())
        dt = min(road.config.cfl for road in self.roads.values()) * dx_min / alpha
        if t_end is not None and self.t + dt >= t_end - 1e-15 * max(1.0, abs(t_end)):
            dt = t_end - self.t
        if dt <= 0:
            raise ValueError("nonpositive network time step")
        return dt, alpha

    def step(self, t_end: float | None = None) -> float:
        ids = sorted(self.roads)
        self._resolve_all({r: self.roads[r].coeffs for r in ids})
        dt, alpha0 = self.select_dt(t_end)
        any_cfg = self.roads[ids[0]].config
        max_retries = any_cfg.max_retries if any_cfg.dt_retry else 0
        for attempt in range(max_retries + 1):
            snapshots = {r: (self.roads[r].global_box, self.roads[r].cell_boxes) for r in ids}
            try:
                self._attempt(ids, dt, alpha0)
            except _RetryStep:
                for r in ids:
                    self.roads[r].global_box, self.roads[r].cell_boxes = snapshots[r]
                if attempt == max_retries:
                    raise RuntimeError("network stage speed grew beyond the CFL bound")
                dt *= 0.5
                continue
            self.t += dt
            self.steps += 1
            return dt
        raise AssertionError("unreachable")

    def _attempt(self, ids: list[int], dt: float, alpha0: float) -> None:
        u0 = {r: self.roads[r].coeffs for r in ids}
        prev = dict(u0)
        flux_acc = {r: (np.zeros(3), np.zeros(3)) for r in ids}
        for s in (1, 2, 3):
            if s > 1:
                self._resolve_all(prev)
                alpha = max(self.roads[r].stage_alpha(prev[r]) for r in ids)
                for r in ids:
                    road = self.roads[r]
                    if alpha * dt / road.mesh.dx > float(road.config.gl_rule.weights[0]) * (1.0 + 1e-12):
                        raise _RetryStep
            else:
                alpha = alpha0
            new = {}
            for r in ids:
                road = self.roads[r]
                out, _box, bflux, _frac = road._stage(s, u0[r], prev[r], dt, alpha)
                new[r] = out
                acc_l, acc_r = flux_acc[r]
                acc_l += RK_FLUX_WEIGHTS[s - 1] * dt * bflux[0]
                acc_r += RK_FLUX_WEIGHTS[s - 1] * dt * bflux[1]
            prev = new
        for r in ids:
            road = self.roads[r]
            road.coeffs = prev[r]
            road.t += dt
            road.diag.steps += 1
            acc_l, acc_r = flux_acc[r]
            road.diag.boundary_flux_in += acc_l
            road.diag.boundary_flux_out += acc_r

    def run(self, t_end: float, *, max_steps: int = 10_000_000, callback=None) -> None:
        while self.t < t_end * (1.0 - 1e-14):
            if self.steps >= max_steps:
                raise RuntimeError("network step budget exhausted")
            if any(road.diag.failed for road in self.roads.values()):
                break
            self.step(t_end)
            if callback is not None:
                callback(self)

    # -- reporting ----------------------------------------------------------

    def totals(self) -> np.ndarray:
        return np.sum([road.totals() for road in self.roads.values()], axis=0)

    def junction_flux_imbalance(self) -> float:
        """Worst per-component mismatch between the prescribed fluxes leaving
        incoming roads and entering outgoing roads, over all junctions."""
        worst = 0.0
        for jc in self.junctions:
            res = self.resolutions.get(jc.id)
            if res is None:
                continue
            total_in = np.sum(res.flux_in, axis=0) if res.flux_in else np.zeros(3)
            total_out = np.sum(res.flux_out, axis=0) if res.flux_out else np.zeros(3)
            scale = max(float(np.abs(total_in).max()), 1e-30)
            worst = max(worst, float(np.abs(total_in - total_out).max()) / scale)
        return worst

    def external_flux_balance(self) -> np.ndarray:
        """Total mass change minus net inflow through non-junction ends
        (junction transfer cancels by construction)."""
        change = np.zeros(3)
        for road in self.roads.values():
            change += road.diag.boundary_flux_in - road.diag.boundary_flux_out
        return change
