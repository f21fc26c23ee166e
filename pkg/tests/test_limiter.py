"""Limiter contracts: theta roots, feasibility, average preservation."""

from __future__ import annotations

import numpy as np
import pytest

from arznet import limiter as lim
from arznet import mesh as msh
from arznet import model as M
from arznet.domains import InvariantBox, member
from helpers import box_spanning, sample_states

RNG = np.random.default_rng(77)
K = 2
GL = msh.gauss_lobatto(3).nodes
VOL = msh.gauss_legendre(3).nodes


def bisect_oracle(h_fn, u_bar, u_hat, eps, iters=200):
    if h_fn(u_hat) >= eps:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if h_fn(u_bar + mid * (u_hat - u_bar)) >= eps:
            lo = mid
        else:
            hi = mid
    return lo


def test_theta_solve_feasible_point_returns_one():
    h = lambda u: u[0]
    assert lim.theta_solve(h, np.array([1.0, 0, 0]), np.array([0.5, 0, 0]), 1e-12) == 1.0


def test_theta_solve_linear_matches_bisection():
    h = lambda u: u[0]
    u_bar = np.array([0.8, 0.0, 0.0])
    for u_hat_rho in (-0.5, -1e-3, 1e-14):
        u_hat = np.array([u_hat_rho, 0.0, 0.0])
        eps = 1e-12
        got = lim.theta_solve(h, u_bar, u_hat, eps)
        ref = bisect_oracle(h, u_bar, u_hat, eps)
        closed = (0.8 - eps) / (0.8 - u_hat_rho)
        assert got == pytest.approx(ref, abs=1e-14)
        assert got == pytest.approx(closed, abs=1e-13)
        assert h(u_bar + got * (u_hat - u_bar)) >= eps


def test_theta_solve_hypothesis_violation():
    h = lambda u: u[0]
    with pytest.raises(lim.HypothesisError):
        lim.theta_solve(h, np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]), 1e-12)


@pytest.mark.parametrize("gamma,kappa", [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)])
def test_h7_newton_matches_bisection(gamma, kappa):
    law = M.PressureLaw(0.4, gamma, kappa)
    v_min = 0.2
    box = InvariantBox(v_min=v_min, w_min=-100, w_max=100, c_min=0.0, c_max=100)

    def h7(u):
        return u[1] - u[0] * (v_min + float(M.pressure(law, u[0], u[2])))

    n_checked = 0
    for _ in range(300):
        u_bar = sample_states(law, RNG, 1, v_range=(v_min + 0.05, 1.0))[0]
        u_hat = sample_states(law, RNG, 1, v_range=(-0.5, v_min - 0.01))[0]
        eps = min(1e-12, h7(u_bar))
        if h7(u_hat) >= eps:
            continue
        n_checked += 1
        nodes = u_hat[None, None, :]
        th = lim._solve_h7_theta(law, np.array([v_min]), u_bar[None, :], nodes, np.array([eps]))[0]
        ref = bisect_oracle(h7, u_bar, u_hat, eps)
        assert th == pytest.approx(ref, abs=1e-10)
        val = h7(u_bar + th * (u_hat - u_bar))
        assert val >= eps - 1e-13 * (1 + abs(val))
        # one-sided: the returned point is feasible as computed
        assert val >= eps or val == pytest.approx(eps, abs=1e-15)
    assert n_checked > 100


def test_limit_cells_identity_on_feasible_data():
    law = M.PressureLaw(0.3, 1.0, 2.0)
    mesh = msh.Mesh1D(0.0, 1.0, 12)

    def sampler(x):
        rho = 0.4 + 0.05 * np.sin(2 * np.pi * x)
        return M.from_primitives(law, rho, 0.5, 1.0)

    co = msh.project(sampler, mesh, K)
    box = InvariantBox(v_min=0.0, w_min=-10, w_max=10.0, c_min=0.5, c_max=1.5)
    out, rep = lim.limit_cells(law, co, box, GL, positivity_nodes=VOL)
    np.testing.assert_array_equal(out, co)
    assert np.all(rep.theta1 == 1.0) and np.all(rep.theta3 == 1.0)
    # constant cells are untouched as well
    const = np.zeros((4, 3, K + 1))
    const[:, :, 0] = M.from_primitives(law, 0.5, 0.4, 1.0)
    out2, _ = lim.limit_cells(law, const, box, GL)
    np.testing.assert_array_equal(out2, const)


def test_limit_cells_restores_density_positivity():
    law = M.PressureLaw(0.3, 0.0, 1.0)
    co = np.zeros((1, 3, K + 1))
    co[0, :, 0] = M.from_primitives(law, 0.2, 0.5, 1.0)
    co[0, 0, 1] = 0.5  # rho at the left GL node = 0.2 - 0.5 < 0
    co[0, 2, 1] = 0.1
    box = InvariantBox(v_min=0.0, w_min=-100, w_max=100, c_min=-100, c_max=100)
    out, rep = lim.limit_cells(law, co, box, GL, positivity_nodes=VOL)
    eps1 = min(1e-12, 0.2)
    vals = msh.eval_poly(out, np.unique(np.concatenate([GL, VOL])))
    assert vals[0, 0, :].min() >= eps1 - 1e-15
    assert vals[0, 2, :].min() >= eps1 - 1e-15
    assert rep.theta1[0] < 1.0
    np.testing.assert_array_equal(out[:, :, 0], co[:, :, 0])


@pytest.mark.parametrize("gamma,kappa", [(0.0, 1.0), (2.0, 3.0)])
def test_limit_cells_randomized_feasibility(gamma, kappa):
    # infeasible cells with feasible averages: post-limit GL values satisfy
    # all constraints with slack >= -1e-12
    law = M.PressureLaw(0.4, gamma, kappa)
    n = 2000
    avg = sample_states(law, RNG, n, rho_range=(0.05, 1.0), v_range=(0.1, 0.9))
    box = box_spanning(law, avg, pad=1e-6)
    co = np.zeros((n, 3, K + 1))
    co[:, :, 0] = avg
    co[:, :, 1:] = RNG.normal(scale=0.3, size=(n, 3, K)) * avg[:, :, None]
    out, rep = lim.limit_cells(law, co, box, GL, positivity_nodes=VOL)
    np.testing.assert_array_equal(out[:, :, 0], co[:, :, 0])
    states = np.moveaxis(msh.eval_poly(out, GL), 1, 2).reshape(-1, 3)
    res = member(box, law, states, tol=1e-12)
    assert bool(np.all(res.ok)), f"worst slack {res.worst()}"
    assert rep.hypothesis_failures == 0


def test_limit_cells_average_preservation_bitwise():
    law = M.PressureLaw(0.4, 1.0, 2.0)
    n = 500
    avg = sample_states(law, RNG, n)
    box = box_spanning(law, avg, pad=1e-9)
    co = np.zeros((n, 3, K + 1))
    co[:, :, 0] = avg
    co[:, :, 1:] = RNG.normal(scale=1.0, size=(n, 3, K))
    out, _ = lim.limit_cells(law, co, box, GL, positivity_nodes=VOL)
    assert np.array_equal(out[:, :, 0], co[:, :, 0])


def test_limit_cells_skip_constraint():
    # with the w upper bound disabled, overshooting w survives limiting
    law = M.PressureLaw(0.3, 0.0, 1.0)
    avg = M.from_primitives(law, 0.5, 0.5, 1.0)
    w_avg = avg[1] / avg[0]
    co = np.zeros((1, 3, K + 1))
    co[0, :, 0] = avg
    co[0, 1, 1] = 0.8 * avg[1]  # strong y tilt: w overshoots at a node
    box = InvariantBox(v_min=-100.0, w_min=-100.0, w_max=w_avg + 0.05, c_min=0.0, c_max=100.0)
    limited, _ = lim.limit_cells(law, co, box, GL)
    relaxed, _ = lim.limit_cells(law, co, box, GL, skip=frozenset({4}))
    w_lim = msh.eval_poly(limited, GL)[0, 1, :] / msh.eval_poly(limited, GL)[0, 0, :]
    w_rel = msh.eval_poly(relaxed, GL)[0, 1, :] / msh.eval_poly(relaxed, GL)[0, 0, :]
    assert w_lim.max() <= box.w_max + 1e-12
    assert w_rel.max() > w_lim.max()


def test_round_off_average_escape_widens_bound():
    law = M.PressureLaw(0.3, 0.0, 1.0)
    avg = M.from_primitives(law, 0.5, 0.5, 1.0)
    w_avg = avg[1] / avg[0]
    box = InvariantBox(v_min=0.0, w_min=0.0, w_max=w_avg - 1e-13, c_min=0.5, c_max=1.5)
    co = np.zeros((1, 3, K + 1))
    co[0, :, 0] = avg
    out, rep = lim.limit_cells(law, co, box, GL)
    assert rep.widened_bounds == 1 and rep.hypothesis_failures == 0
    np.testing.assert_array_equal(out, co)
