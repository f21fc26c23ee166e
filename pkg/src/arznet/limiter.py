"""Two-step bound-preserving limiter.

Step 1 scales the rho and z fields toward their cell averages until both
are positive at every check node. Step 2 scales the whole state vector
until the five invariant constraints (w bounds, c bounds, v lower bound)
hold at the Gauss-Lobatto nodes. Both steps are affine scalings about the
cell average, so mode-0 coefficients are never written. Each scaling
coefficient is the minimum over nodes of the root of the corresponding
constraint function; the nonlinear velocity constraint is solved by
Newton with a bisection safeguard, always landing on the feasible side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mesh as msh
from .domains import InvariantBox
from .model import PressureLaw, pressure, pressure_derivs

__all__ = ["LimiterReport", "HypothesisError", "theta_solve", "limit_cells", "constraint_values"]

EPS_CAP = 1e-12
ALL_CONSTRAINTS = frozenset(range(1, 8))


class HypothesisError(RuntimeError):
    """Cell average infeasible beyond round-off; the limiter cannot run."""


@dataclass
class LimiterReport:
    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray
    widened_bounds: int = 0
    hypothesis_failures: int = 0
    widened_cells: list = field(default_factory=list)
    # the box actually enforced: input bounds, widened where an average had
    # drifted out (every widening is counted above)
    box_used: object = None
    # post-limit states at the GL nodes (affine images of the evaluations)
    gl_states: object = None

    @property
    def limited_fraction(self) -> float:
        return float(np.mean(self.theta3 < 1.0))


def theta_solve(h_fn, u_bar: np.ndarray, u_hat: np.ndarray, eps: float, *, tol: float = 1e-14) -> float:
    """Largest theta in [0,1] with h(theta*u_hat + (1-theta)*u_bar) >= eps.

    h_fn must be concave along the segment and satisfy h(u_bar) >= eps.
    The returned theta always evaluates feasible in floating point.
    """
    u_bar = np.asarray(u_bar, float)
    u_hat = np.asarray(u_hat, float)
    h_bar = float(h_fn(u_bar))
    if h_bar < eps:
        raise HypothesisError(f"h(average) = {h_bar} < eps = {eps}")
    if float(h_fn(u_hat)) >= eps:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(h_fn(u_bar + mid * (u_hat - u_bar))) >= eps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return lo


def constraint_values(law: PressureLaw, box: InvariantBox, states: np.ndarray) -> np.ndarray:
    """H_1..H_7 stacked along the first axis.

    H_7 needs rho > 0 and z > 0; callers must certify positivity first.
    """
    states = np.asarray(states, float)
    rho, y, z = states[..., 0], states[..., 1], states[..., 2]
    h = np.empty((7,) + rho.shape)
    h[0] = rho
    h[1] = z
    h[2] = y - rho * np.asarray(box.w_min)
    h[3] = rho * np.asarray(box.w_max) - y
    h[4] = z - rho * np.asarray(box.c_min)
    h[5] = rho * np.asarray(box.c_max) - z
    h[6] = y - rho * (np.asarray(box.v_min) + pressure(law, rho, z, floor=1e-300))
    return h


def _linear_theta(h_bar: np.ndarray, h_hat: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Per-node theta for a constraint linear along the scaling segment."""
    need = h_hat < eps
    denom = np.where(need, h_bar - h_hat, 1.0)
    theta = np.where(need & (denom > 0.0), (h_bar - eps) / denom, 1.0)
    return np.clip(theta, 0.0, 1.0)


def _h7(law: PressureLaw, box_vmin, rho, y, z):
    return y - rho * (box_vmin + pressure(law, rho, z, floor=1e-300))


def _solve_h7_theta(
    law: PressureLaw,
    v_min: np.ndarray,
    u_bar: np.ndarray,
    nodes: np.ndarray,
    eps: np.ndarray,
    max_newton: int = 50,
) -> np.ndarray:
    """Vectorized largest feasible theta for the concave velocity constraint.

    u_bar: (n, 3) averages; nodes: (n, L, 3); eps: (n,). Newton from the
    infeasible side with a bisection fallback; the result is backed off
    until the computed constraint value is >= eps.
    """
    n, L, _ = nodes.shape
    vm = np.broadcast_to(np.asarray(v_min, float), (n,))
    d = nodes - u_bar[:, None, :]  # (n, L, 3)
    h_hat = _h7(law, vm[:, None], nodes[..., 0], nodes[..., 1], nodes[..., 2])
    need = h_hat < eps[:, None]
    theta = np.ones((n, L))
    if not np.any(need):
        return theta.min(axis=1)

    idx = np.nonzero(need)
    ub = u_bar[idx[0]]
    dd = d[idx[0], idx[1]]
    ee = eps[idx[0]]
    vmn = vm[idx[0]]

    def g_and_deriv(th):
        u = ub + th[:, None] * dd
        rho, y, z = u[:, 0], u[:, 1], u[:, 2]
        p = pressure(law, rho, z, floor=1e-300)
        p_r, p_z = pressure_derivs(law, rho, z, floor=1e-300)
        g = y - rho * (vmn + p) - ee
        gp = dd[:, 1] - dd[:, 0] * (vmn + p) - rho * (p_r * dd[:, 0] + p_z * dd[:, 2])
        return g, gp

    th = np.ones(len(ub))
    converged = np.zeros(len(ub), bool)
    for _ in range(max_newton):
        g, gp = g_and_deriv(th)
        converged |= np.abs(g) <= 1e-13 * (1.0 + np.abs(g + ee))
        if np.all(converged):
            break
        step = np.where(np.abs(gp) > 1e-300, g / np.where(gp == 0, 1.0, gp), 0.0)
        new = th - step
        bad = ~np.isfinite(new) | (new < 0.0) | (new > 1.0) | (np.abs(gp) <= 1e-300)
        th = np.where(converged, th, np.where(bad, np.nan, new))
        if np.any(np.isnan(th)):
            break

    # bisection (feasible-side) for non-convergence, iterate escapes, and
    # Newton roots that landed a hair infeasible; lo = 0 is feasible since
    # h(average) >= eps by hypothesis
    with np.errstate(invalid="ignore"):
        g_now, _ = g_and_deriv(np.where(np.isfinite(th), th, 1.0))
    stray = ~np.isfinite(th) | ~converged | (g_now < 0.0)
    if np.any(stray):
        lo = np.zeros(int(stray.sum()))
        hi = np.where(np.isfinite(th[stray]), th[stray], 1.0)
        ub_s, dd_s, ee_s, vm_s = ub[stray], dd[stray], ee[stray], vmn[stray]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            u = ub_s + mid[:, None] * dd_s
            g = _h7(law, vm_s, u[:, 0], u[:, 1], u[:, 2]) - ee_s
            take = g >= 0.0
            lo = np.where(take, mid, lo)
            hi = np.where(take, hi, mid)
        th[stray] = lo

    theta[idx] = th
    return theta.min(axis=1)


def limit_cells(
    law: PressureLaw,
    coeffs: np.ndarray,
    box: InvariantBox,
    gl_nodes: np.ndarray,
    *,
    positivity_nodes: np.ndarray | None = None,
    skip: frozenset[int] = frozenset(),
    tol: float = 1e-12,
) -> tuple[np.ndarray, LimiterReport]:
    """Apply the two-step limiter to every cell.

    coeffs: (n_cells, 3, k+1) modal coefficients; box bounds are scalars or
    per-cell arrays. positivity_nodes extends Step 1's check set (the
    volume quadrature nodes the DG operator will evaluate). skip removes
    constraints from Step 2 by index (3..7), e.g. {4} disables the w upper
    bound. Averages that violate their box by round-off get the offending
    bound widened by 10*tol; anything worse counts as a hypothesis failure
    and the bound is stretched to readmit the average so the run can
    continue under diagnostics.
    """
    coeffs = np.asarray(coeffs, float)
    n = coeffs.shape[0]
    u_bar = coeffs[:, :, 0]  # (n, 3)

    step1_nodes = gl_nodes
    if positivity_nodes is not None:
        step1_nodes = np.unique(np.concatenate([gl_nodes, positivity_nodes]))

    report = LimiterReport(
        theta1=np.ones(n), theta2=np.ones(n), theta3=np.ones(n)
    )

    # --- average feasibility (limiter hypothesis) -------------------------
    box = _readmit_averages(law, box, u_bar, tol, report)

    h_bar = constraint_values(law, box, u_bar)  # (7, n)
    # positivity targets stay strictly positive (the operator must evaluate
    # p at the nodes). The invariant targets cap the round-off margin at
    # a tenth of the cell's own headroom: H scales with rho, so an absolute
    # margin comparable to H(avg) would chop near-vacuum cells toward their
    # averages every stage (the root of H = H(avg) along the segment is
    # theta = 0) and destroy the scheme's order
    eps = np.minimum(EPS_CAP, h_bar)
    eps[2:] = np.minimum(EPS_CAP, 0.1 * np.maximum(h_bar[2:], 0.0))

    # --- step 1: positivity of rho and z ----------------------------------
    vals1 = msh.eval_poly(coeffs, step1_nodes)  # (n, 3, P)
    report.theta1 = _linear_theta(
        h_bar[0][:, None], vals1[:, 0, :], eps[0][:, None]
    ).min(axis=1)
    report.theta2 = _linear_theta(
        h_bar[1][:, None], vals1[:, 2, :], eps[1][:, None]
    ).min(axis=1)
    out = coeffs.copy()
    out[:, 0, 1:] *= report.theta1[:, None]
    out[:, 2, 1:] *= report.theta2[:, None]

    # --- step 2: invariant bounds at the GL nodes -------------------------
    # node values transform affinely under the scalings, so the step-1
    # evaluations are reused instead of re-evaluating the polynomials
    gl_in_union = np.searchsorted(step1_nodes, gl_nodes)
    vals2 = vals1[:, :, gl_in_union].copy()
    vals2[:, 0, :] = report.theta1[:, None] * vals2[:, 0, :] + (
        1.0 - report.theta1[:, None]
    ) * u_bar[:, 0, None]
    vals2[:, 2, :] = report.theta2[:, None] * vals2[:, 2, :] + (
        1.0 - report.theta2[:, None]
    ) * u_bar[:, 2, None]
    nodes = np.moveaxis(vals2, 1, 2)  # (n, L, 3)
    theta3 = np.ones(n)
    active = [r for r in (3, 4, 5, 6) if r not in skip]
    if active:
        h_hat_all = np.stack(
            [
                (
                    nodes[..., 1] - nodes[..., 0] * np.asarray(box.w_min)[..., None]
                    if r == 3
                    else nodes[..., 0] * np.asarray(box.w_max)[..., None] - nodes[..., 1]
                    if r == 4
                    else nodes[..., 2] - nodes[..., 0] * np.asarray(box.c_min)[..., None]
                    if r == 5
                    else nodes[..., 0] * np.asarray(box.c_max)[..., None] - nodes[..., 2]
                )
                for r in active
            ]
        )  # (A, n, L)
        rows = [r - 1 for r in active]
        th = _linear_theta(h_bar[rows][:, :, None], h_hat_all, eps[rows][:, :, None])
        theta3 = th.min(axis=(0, 2))
    if 7 not in skip:
        th7 = _solve_h7_theta(law, box.v_min, u_bar, nodes, eps[6])
        theta3 = np.minimum(theta3, th7)

    report.theta3 = theta3
    out[:, :, 1:] *= theta3[:, None, None]
    report.box_used = box
    report.gl_states = (
        theta3[:, None, None] * nodes + (1.0 - theta3[:, None, None]) * u_bar[:, None, :]
    )
    return out, report


def _readmit_averages(
    law: PressureLaw, box: InvariantBox, u_bar: np.ndarray, tol: float, report: LimiterReport
) -> InvariantBox:
    """Widen per-cell bounds whose average slack is negative; round-off
    escapes get 10*tol headroom, larger ones are counted as failures."""
    rho, y, z = u_bar[:, 0], u_bar[:, 1], u_bar[:, 2]
    if np.any(rho <= 0.0) or np.any(z <= 0.0):
        raise HypothesisError("cell average with nonpositive rho or z")
    w = y / rho
    c = z / rho
    v = w - pressure(law, rho, z)

    def as_cells(b):
        return np.broadcast_to(np.asarray(b, float), rho.shape).copy()

    v_min, w_min, w_max = as_cells(box.v_min), as_cells(box.w_min), as_cells(box.w_max)
    c_min, c_max = as_cells(box.c_min), as_cells(box.c_max)
    changed = False
    for bound, value, side in (
        (v_min, v, -1),
        (w_min, w, -1),
        (w_max, w, +1),
        (c_min, c, -1),
        (c_max, c, +1),
    ):
        slack = (value - bound) if side < 0 else (bound - value)
        viol = slack < 0.0
        if np.any(viol):
            changed = True
            small = viol & (slack >= -tol)
            large = viol & ~small
            report.widened_bounds += int(np.count_nonzero(viol))
            report.hypothesis_failures += int(np.count_nonzero(large))
            if np.any(large):
                report.widened_cells.extend(np.nonzero(large)[0].tolist())
            # widen away from the violated side; large escapes get stretched
            # far enough to readmit the average (plus headroom)
            shift = np.where(small, 10.0 * tol, -slack + 10.0 * tol)
            bound -= np.where(viol & (side < 0), shift, 0.0)
            bound += np.where(viol & (side > 0), shift, 0.0)
    if not changed:
        return box
    return InvariantBox(v_min=v_min, w_min=w_min, w_max=w_max, c_min=c_min, c_max=c_max)
