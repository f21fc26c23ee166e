"""One full time step of the scheme: three SSP-RK stages, oscillation
damping after each stage, and bound enforcement against the per-stage
invariant domains, with CFL-governed step-size selection.

Mode matrix (the four schemes compared in the experiments, plus the
global/local split of the bound-preserving one):

    local-bp   damping + limiter against per-cell domains (default)
    global-bp  damping + limiter against the running global domain
    nonbp-oe   damping only; first invariant-domain breach ends the run
    bp-nooe    limiter only
    plain-dg   neither; breaches are recorded but only positivity is fatal
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import dg, mesh as msh, oe
from .domains import InvariantBox, combine_stage_boxes, update_global_box, vicinity_bounds
from .limiter import HypothesisError, limit_cells
from .model import (
    DomainError,
    PressureLaw,
    SBarVariant,
    alpha_max_value,
    pressure,
    speed_radius,
)

__all__ = ["Mode", "AlphaPolicy", "StepConfig", "Diagnostics", "StageRecord", "RoadSolver", "select_dt"]

RK_FLUX_WEIGHTS = (1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0)


class Mode(enum.Enum):
    GLOBAL_BP = "global-bp"
    LOCAL_BP = "local-bp"
    NONBP_OE = "nonbp-oe"
    PLAIN_DG = "plain-dg"
    BP_NOOE = "bp-nooe"

    @property
    def uses_oe(self) -> bool:
        return self in (Mode.GLOBAL_BP, Mode.LOCAL_BP, Mode.NONBP_OE)

    @property
    def uses_limiter(self) -> bool:
        return self in (Mode.GLOBAL_BP, Mode.LOCAL_BP, Mode.BP_NOOE)

    @property
    def is_bp(self) -> bool:
        return self.uses_limiter


class AlphaPolicy(enum.Enum):
    # standard: max propagation-speed estimate over all traces
    # theoretical: the generalized-LF-safe pairwise bound (can be orders of
    # magnitude larger at vacuum-adjacent discontinuities)
    STANDARD = "standard"
    THEORETICAL = "theoretical"


@dataclass(frozen=True)
class StepConfig:
    cfl: float = 0.08
    k: int = 2
    gl_points: int = 3
    mode: Mode = Mode.LOCAL_BP
    alpha_policy: AlphaPolicy = AlphaPolicy.STANDARD
    sbar_variant: SBarVariant = SBarVariant.STANDARD
    dt_retry: bool = True
    max_retries: int = 5
    tol: float = 1e-12
    skip_constraints: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        gl = msh.gauss_lobatto(self.gl_points)
        if 2 * self.gl_points - 3 < self.k:
            raise ValueError("Gauss-Lobatto rule too short for the polynomial degree")
        if self.mode.is_bp and self.cfl > float(gl.weights[0]) + 1e-15:
            raise ValueError(
                f"BP modes need cfl <= first Gauss-Lobatto weight {float(gl.weights[0]):.6f}"
            )

    @property
    def gl_rule(self) -> msh.QuadratureRule:
        return msh.gauss_lobatto(self.gl_points)

    @property
    def volume_rule(self) -> msh.QuadratureRule:
        return msh.gauss_legendre(self.k + 1)


@dataclass
class Diagnostics:
    bp_violations: int = 0
    worst_slack: float = np.inf
    min_slacks: dict = field(default_factory=dict)
    widened_bounds: int = 0
    hypothesis_failures: int = 0
    limited_steps: int = 0
    steps: int = 0
    retries: int = 0
    failed: bool = False
    failure_time: float | None = None
    violated_constraints: set = field(default_factory=set)
    first_breach: dict = field(default_factory=dict)
    boundary_flux_in: np.ndarray = field(default_factory=lambda: np.zeros(3))
    boundary_flux_out: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def note_slacks(self, mins: dict[str, float]) -> None:
        for name, m in mins.items():
            if m != m:  # all-nan slack: positivity lost everywhere
                m = -np.inf
            prev = self.min_slacks.get(name, np.inf)
            self.min_slacks[name] = min(prev, m)
            self.worst_slack = min(self.worst_slack, m)


@dataclass
class StageRecord:
    dt: float
    alphas: tuple[float, ...]
    stage_solutions: tuple[np.ndarray, ...]
    boxes: tuple
    limited_fraction: float


SLACK_NAMES = ("rho", "z", "w_min", "w_max", "c_min", "c_max", "v_min")


def _box_slacks(law: PressureLaw, box: InvariantBox, states: np.ndarray) -> np.ndarray:
    """Constraint slacks in invariant units at arbitrary states, stacked as
    (7, ...) in SLACK_NAMES order; invariant slacks are nan where
    positivity fails.

    states: (n_cells, L, 3); per-cell box bounds broadcast along L.
    """
    rho, y, z = states[..., 0], states[..., 1], states[..., 2]
    pos = (rho > 0.0) & (z > 0.0)
    rho_s = np.where(rho > 0, rho, 1.0)
    w = np.where(rho > 0, y / rho_s, np.nan)
    c = np.where(rho > 0, z / rho_s, np.nan)
    p = np.where(pos, pressure(law, rho_s, np.where(z > 0, z, 1.0), floor=1e-300), np.nan)
    v = w - p

    def b(x):
        return np.asarray(x, float)[..., None] if np.ndim(x) else x

    out = np.empty((7,) + rho.shape)
    out[0] = rho
    out[1] = z
    out[2] = w - b(box.w_min)
    out[3] = b(box.w_max) - w
    out[4] = c - b(box.c_min)
    out[5] = b(box.c_max) - c
    out[6] = v - b(box.v_min)
    return out


class RoadSolver:
    """Broken-polynomial solution of one road segment plus its domain
    bookkeeping; drives single-road runs and is stage-stepped by the
    network loop."""

    def __init__(
        self,
        law: PressureLaw,
        mesh: msh.Mesh1D,
        coeffs: np.ndarray,
        bc: dg.BoundaryCondition,
        config: StepConfig,
        global_box: InvariantBox,
    ) -> None:
        self.law = law
        self.mesh = mesh
        self.coeffs = np.asarray(coeffs, float)
        self.bc = bc
        self.config = config
        self.global_box = global_box
        self.cell_boxes: InvariantBox | None = None
        self.t = 0.0
        self.diag = Diagnostics()
        self._step_start_avg = None

    # ------------------------------------------------------------- helpers

    def interface_pairs(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return dg.interface_states(coeffs, self.bc)

    def stage_alpha(self, coeffs: np.ndarray) -> float:
        if self.config.alpha_policy is AlphaPolicy.THEORETICAL:
            u_minus, u_plus = self.interface_pairs(coeffs)
            vals = alpha_max_value(self.law, u_minus, u_plus, variant=self.config.sbar_variant)
            a = float(vals.max())
        else:
            # propagation speeds from the certified cell averages plus the
            # exterior boundary states; near-vacuum trace ratios are
            # meaningless (w = y/rho at rho ~ 1e-12) and must not set dt
            a = float(speed_radius(self.law, coeffs[:, :, 0]).max())
            if not self.bc.is_periodic:
                left, right = dg.traces(coeffs)
                ext = np.stack(self.bc.exterior(left[0], right[-1]))
                a = max(a, float(speed_radius(self.law, ext).max()))
        if not np.isfinite(a) or a <= 0.0:
            raise DomainError("nonfinite or nonpositive interface speed")
        return a

    def gl_states(self, coeffs: np.ndarray) -> np.ndarray:
        vals = msh.eval_poly(coeffs, self.config.gl_rule.nodes)
        return np.moveaxis(vals, 1, 2)  # (n, L, 3)

    # ------------------------------------------------------------ stepping

    def select_dt(self, t_end: float | None = None) -> tuple[float, float]:
        """CFL step from the current traces, clipped to land on t_end."""
        alpha = self.stage_alpha(self.coeffs)
        dt = self.config.cfl * self.mesh.dx / alpha
        if t_end is not None and self.t + dt >= t_end - 1e-15 * max(1.0, abs(t_end)):
            dt = t_end - self.t
        if dt <= 0:
            raise ValueError("nonpositive time step")
        return dt, alpha

    def step(self, t_end: float | None = None) -> StageRecord:
        """Advance one full three-stage step (single-road driver)."""
        dt, alpha = self.select_dt(t_end)
        for attempt in range(self.config.max_retries + 1):
            snapshot = (self.global_box, self.cell_boxes)
            try:
                record = self._attempt_step(dt, alpha)
            except _RetryStep:
                self.global_box, self.cell_boxes = snapshot
                if not self.config.dt_retry or attempt == self.config.max_retries:
                    raise RuntimeError("stage speed grew beyond the CFL bound; retries exhausted")
                self.diag.retries += 1
                dt *= 0.5
                continue
            return record
        raise AssertionError("unreachable")

    def _attempt_step(self, dt: float, alpha0: float) -> StageRecord:
        u0 = self.coeffs
        gl_w1 = float(self.config.gl_rule.weights[0])
        prev = u0
        alphas = []
        solutions = []
        boxes = []
        flux_acc_l = np.zeros(3)
        flux_acc_r = np.zeros(3)
        record_boxes: list = []
        theta_active = 0.0
        for s in (1, 2, 3):
            alpha = alpha0 if s == 1 else self.stage_alpha(prev)
            if s > 1 and alpha * dt / self.mesh.dx > gl_w1 * (1.0 + 1e-12):
                raise _RetryStep
            new, box_used, bflux, frac = self._stage(s, u0, prev, dt, alpha)
            flux_acc_l += RK_FLUX_WEIGHTS[s - 1] * dt * bflux[0]
            flux_acc_r += RK_FLUX_WEIGHTS[s - 1] * dt * bflux[1]
            alphas.append(alpha)
            solutions.append(new)
            record_boxes.append(box_used)
            theta_active = max(theta_active, frac)
            prev = new
            if self.diag.failed:
                break
        self.coeffs = prev
        self.t += dt
        self.diag.steps += 1
        self.diag.boundary_flux_in += flux_acc_l
        self.diag.boundary_flux_out += flux_acc_r
        if theta_active > 0:
            self.diag.limited_steps += 1
        return StageRecord(
            dt=dt,
            alphas=tuple(alphas),
            stage_solutions=tuple(solutions),
            boxes=tuple(record_boxes),
            limited_fraction=theta_active,
        )

    def _stage(self, s: int, u0: np.ndarray, prev: np.ndarray, dt: float, alpha: float):
        """One RK stage: operator + combination, damping, box update,
        limiting, and feasibility accounting. Returns (solution, box,
        boundary fluxes, limited fraction)."""
        cfg = self.config
        rhs, bflux = dg.apply_L(
            self.law, prev, self.mesh.dx, self.bc, alpha,
            volume_rule=cfg.volume_rule, return_boundary_fluxes=True,
        )
        if s == 1:
            tilde = prev + dt * rhs
        elif s == 2:
            tilde = 0.75 * u0 + 0.25 * (prev + dt * rhs)
        else:
            tilde = (1.0 / 3.0) * u0 + (2.0 / 3.0) * (prev + dt * rhs)

        left, right = dg.traces(prev)
        wrap_l, wrap_r = self.bc.exterior(left[0], right[-1])
        periodic = self.bc.is_periodic

        if cfg.mode.uses_oe:
            prof = oe.damping_profile(
                self.law, tilde, u0[:, :, 0], self.mesh.dx, cfg.k,
                None if periodic else wrap_l, None if periodic else wrap_r,
                periodic=periodic,
            )
            hat = oe.apply_oe(tilde, prof, dt, self.mesh.dx)
        else:
            hat = tilde

        # invariant-domain update from stage-(s-1) exterior traces
        if not periodic:
            self.global_box = update_global_box(self.global_box, self.law, np.stack([wrap_l, wrap_r]))

        box = self.global_box
        if cfg.mode is Mode.LOCAL_BP:
            vic, meaningful = vicinity_bounds(
                self.law, prev, self.mesh.dx, wrap_l, wrap_r, cfg.gl_rule.nodes,
                return_meaningful=True,
            )
            box = combine_stage_boxes(
                self.global_box, vic, None if s == 1 else self.cell_boxes, meaningful
            )
            self.cell_boxes = box

        frac = 0.0
        if cfg.mode.uses_limiter:
            try:
                new, rep = limit_cells(
                    self.law, hat, box, cfg.gl_rule.nodes,
                    positivity_nodes=cfg.volume_rule.nodes,
                    skip=cfg.skip_constraints, tol=cfg.tol,
                )
            except HypothesisError:
                # a cell average left the positive quadrant (vacuum
                # stiffness at the current step size): retry smaller
                raise _RetryStep
            self.diag.widened_bounds += rep.widened_bounds
            self.diag.hypothesis_failures += rep.hypothesis_failures
            frac = rep.limited_fraction
            # feasibility is asserted against the box the limiter actually
            # enforced (bound-estimate escapes are readmitted and counted
            # in hypothesis_failures, never silently)
            box = rep.box_used if rep.box_used is not None else box
            self._assert_gl_feasible(new, box, states=rep.gl_states)
        else:
            new = hat
            self._detect_violations(new, dt)
        return new, box, bflux, frac

    def _exteriors(self, coeffs: np.ndarray):
        if self.bc.is_periodic:
            return None, None
        left, right = dg.traces(coeffs)
        return self.bc.exterior(left[0], right[-1])

    def _exteriors_or_wrap(self, coeffs: np.ndarray):
        left, right = dg.traces(coeffs)
        return self.bc.exterior(left[0], right[-1])

    def _assert_gl_feasible(self, coeffs: np.ndarray, box: InvariantBox, states=None) -> None:
        if states is None:
            states = self.gl_states(coeffs)
        slacks = _box_slacks(self.law, box, states)
        with np.errstate(invalid="ignore"):
            mins = np.nanmin(slacks.reshape(7, -1), axis=1)
        self.diag.note_slacks(dict(zip(SLACK_NAMES, mins.tolist())))
        tol = self.config.tol
        bad = ~(slacks >= -tol)  # catches nan as well
        if bad.any():
            counts = bad.reshape(7, -1).sum(axis=1)
            self.diag.bp_violations += int(counts.sum())
            for name, cnt in zip(SLACK_NAMES, counts):
                if cnt:
                    self.diag.violated_constraints.add(name)

    def _detect_violations(self, coeffs: np.ndarray, dt: float) -> None:
        """Invariant-domain surveillance for the modes without a limiter.

        Every breach is recorded with its first occurrence time; only the
        loss of positivity (which makes the operator unevaluable) ends the
        run, matching the reported failure semantics.
        """
        slacks = _box_slacks(self.law, self.global_box, self.gl_states(coeffs))
        with np.errstate(invalid="ignore"):
            mins = np.nanmin(slacks.reshape(7, -1), axis=1)
        self.diag.note_slacks(dict(zip(SLACK_NAMES, mins.tolist())))
        tol = self.config.tol
        bad = (~(slacks >= -tol)).reshape(7, -1).any(axis=1)
        breached = [name for name, b in zip(SLACK_NAMES, bad) if b]
        if not breached:
            return
        when = self.t + dt
        self.diag.violated_constraints.update(breached)
        for name in breached:
            self.diag.first_breach.setdefault(name, when)
        if self.diag.failure_time is None:
            self.diag.failure_time = when
        if "rho" in breached or "z" in breached:
            self.diag.failed = True

    # ------------------------------------------------------------- driving

    def run(self, t_end: float, *, max_steps: int = 10_000_000, callback=None) -> Diagnostics:
        while self.t < t_end * (1.0 - 1e-14) and not self.diag.failed:
            if self.diag.steps >= max_steps:
                raise RuntimeError("step budget exhausted")
            try:
                rec = self.step(t_end)
            except DomainError:
                # the operator itself became unevaluable: positivity loss
                self.diag.failed = True
                self.diag.violated_constraints.add("rho")
                self.diag.first_breach.setdefault("rho", self.t)
                if self.diag.failure_time is None:
                    self.diag.failure_time = self.t
                break
            if callback is not None:
                callback(self, rec)
        if not self.diag.failed:
            self.t = t_end if abs(self.t - t_end) < 1e-12 * max(1.0, t_end) else self.t
        return self.diag

    # ----------------------------------------------------------- reporting

    def totals(self) -> np.ndarray:
        """dx * sum of cell averages per component."""
        return self.coeffs[:, :, 0].sum(axis=0) * self.mesh.dx


class _RetryStep(Exception):
    pass


def select_dt(solver: RoadSolver, t_end: float | None = None) -> tuple[float, float]:
    """Step size and LF speed from the current traces (module-level alias)."""
    return solver.select_dt(t_end)
