"""Junction coupling: demand/supply, allocation, ghosts, conservation."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from arznet import dg, mesh as msh, model as M
from arznet import network as net
from arznet.setup import build_road
from arznet.stepper import Mode, StepConfig

RNG = np.random.default_rng(5150)


def law_g(gamma=1.0, v_ref=0.01):
    return M.PressureLaw(v_ref, gamma, gamma + 1.0)


# ------------------------------------------------------------ demand/supply


def grid_scan_max(law, w, c, rho_hi, n=200_001):
    rho = np.linspace(1e-12, rho_hi, n)
    return float(net._frozen_flux(law, rho, w, c).max())


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0])
def test_demand_congested_trace_matches_grid_scan(gamma):
    law = law_g(gamma, v_ref=0.1)
    # jammed trace: v = 0 at rho_jam
    w, c = 0.5, 1.0
    rho_jam = net.jam_density(law, w, c)
    state = M.make_state(rho_jam, rho_jam * w, c * rho_jam)
    d = net.demand(law, state)
    scan = grid_scan_max(law, w, c, rho_jam)
    assert d == pytest.approx(scan, rel=1e-6)
    assert d == pytest.approx(net.max_flux(law, w, c), rel=1e-12)


def test_demand_free_flow_is_trace_flux():
    law = law_g(1.0, v_ref=0.1)
    state = M.from_primitives(law, 0.1, 0.4, 1.0)
    rho, v, w, c = M.primitives(law, state)
    assert float(rho) < net.critical_density(law, float(w), float(c))
    assert net.demand(law, state) == pytest.approx(float(rho * v), rel=1e-14)
    # near-vacuum trace sends nothing
    tiny = M.from_primitives(law, 1e-10, 0.4, 1.0)
    assert net.demand(law, tiny) == pytest.approx(0.0, abs=1e-10)


def test_supply_branches():
    law = law_g(1.0, v_ref=0.1)
    # empty outgoing road receives the diagram maximum
    empty = M.from_primitives(law, 1e-9, 0.4, 1.0)
    _, _, w, c = M.primitives(law, empty)
    assert net.supply(law, empty) == pytest.approx(net.max_flux(law, float(w), float(c)), rel=1e-12)
    s_scan = grid_scan_max(law, float(w), float(c), net.jam_density(law, float(w), float(c)))
    assert net.supply(law, empty) == pytest.approx(s_scan, rel=1e-6)
    # jammed outgoing road receives (almost) nothing
    w0 = 0.5
    rho_jam = net.jam_density(law, w0, 1.0)
    jam = M.make_state(rho_jam, rho_jam * w0, rho_jam)
    assert net.supply(law, jam) == pytest.approx(0.0, abs=1e-12)
    # supply is never negative
    for _ in range(200):
        st = M.from_primitives(law, RNG.uniform(1e-6, 1.0), RNG.uniform(0, 1), RNG.uniform(0.5, 1.5))
        assert net.supply(law, st) >= 0.0


# ---------------------------------------------------------------- ghosts


@pytest.mark.parametrize("gamma", [0.0, 2.0])
@pytest.mark.parametrize("side", ["free", "congested"])
def test_ghost_from_flux_reproduces_flux(gamma, side):
    law = law_g(gamma, v_ref=0.1)
    w, c = 0.6, 1.1
    cap = net.max_flux(law, w, c)
    for frac in RNG.uniform(0.01, 0.99, 50):
        q = frac * cap
        state, sat = net.ghost_from_flux(law, q, w, c, side)
        assert not sat
        rho, v, w2, c2 = M.primitives(law, state)
        assert float(rho * v) == pytest.approx(q, rel=1e-10)
        assert float(w2) == pytest.approx(w, rel=1e-12)
        assert float(c2) == pytest.approx(c, rel=1e-12)
        rho_c = net.critical_density(law, w, c)
        if side == "free":
            assert float(rho) <= rho_c * (1 + 1e-9)
        else:
            assert float(rho) >= rho_c * (1 - 1e-9)


def test_ghost_from_flux_edges():
    law = law_g(1.0, v_ref=0.1)
    # zero flux: vacuum ghost with the carried markers
    g, sat = net.ghost_from_flux(law, 0.0, 0.5, 1.2, "congested")
    assert g[0] == net.RHO_VACUUM and not sat
    assert g[2] / g[0] == pytest.approx(1.2, rel=1e-12)
    # flux at the diagram maximum: the argmax state
    cap = net.max_flux(law, 0.5, 1.0)
    g2, sat2 = net.ghost_from_flux(law, cap, 0.5, 1.0, "free")
    assert not sat2
    assert g2[0] == pytest.approx(net.critical_density(law, 0.5, 1.0), rel=1e-12)
    # flux above the maximum: argmax state, flagged
    _, sat3 = net.ghost_from_flux(law, cap * 1.5, 0.5, 1.0, "free")
    assert sat3


# -------------------------------------------------------------- allocation


def brute_force_allocation(d, s, a, beta, grid=160):
    """Grid search over feasible allocations maximizing throughput under
    proportional priorities: largest total with q_i ~ beta among maximal."""
    best = None
    axes = [np.linspace(0.0, di, grid + 1) for di in d]
    for q in itertools.product(*axes):
        q = np.array(q)
        if np.any(a @ q > s + 1e-12):
            continue
        tot = q.sum()
        if best is None or tot > best[0] + 1e-12:
            best = (tot, q)
    return best


def test_allocation_diverge_formula():
    # 1-in/2-out: q = min(demand, min_j supply_j / a_j)
    a = np.array([[0.5], [0.5]])
    q = net.allocate(np.array([0.3]), np.array([0.4, 0.05]), a, np.array([1.0]))
    assert q[0] == pytest.approx(min(0.3, 0.05 / 0.5), rel=1e-12)
    q2 = net.allocate(np.array([0.3]), np.array([10.0, 10.0]), a, np.array([1.0]))
    assert q2[0] == pytest.approx(0.3, rel=1e-12)


def test_allocation_merge_against_brute_force():
    a = np.array([[1.0, 1.0]])
    for d, s in (
        ((0.6, 0.2), 0.5),
        ((0.3, 0.3), 1.0),
        ((0.5, 0.5), 0.4),
        ((0.9, 0.05), 0.5),
    ):
        d = np.array(d)
        beta = np.array([0.5, 0.5])
        q = net.allocate(d, np.array([s]), a, beta)
        tot, _ = brute_force_allocation(d, np.array([s]), a, beta)
        assert q.sum() == pytest.approx(tot, abs=2e-2 * max(tot, 1e-9))
        assert np.all(q <= d + 1e-12)
        assert q.sum() <= s + 1e-12
        # before redistribution each incomer is capped at beta_i * supply
        base = np.minimum(d, beta * s)
        assert np.all(q >= base - 1e-12)


def test_allocation_general_topology_respects_constraints():
    for _ in range(100):
        n_in = RNG.integers(1, 4)
        n_out = RNG.integers(1, 4)
        a = RNG.uniform(0.05, 1.0, (n_out, n_in))
        a /= a.sum(axis=0)
        d = RNG.uniform(0.0, 1.0, n_in)
        s = RNG.uniform(0.05, 1.0, n_out)
        beta = RNG.uniform(0.1, 1.0, n_in)
        beta /= beta.sum()
        q = net.allocate(d, s, a, beta)
        assert np.all(q <= d + 1e-10)
        assert np.all(a @ q <= s + 1e-10)
        assert np.all(q >= -1e-15)


# --------------------------------------------------------- junction solve


def test_resolve_diverge_equal_split():
    law = law_g(1.0)
    jc = net.Junction(id="J", incoming=(1,), outgoing=(2, 3),
                      distribution=np.array([[0.5], [0.5]]), kind="ghmw",
                      priority=np.array([1.0]))
    tr_in = M.from_primitives(law, 0.1, 0.99, 1.0)
    tr_out = M.from_primitives(law, 1e-6, 0.99, 1.0)
    res = net.resolve_junction(jc, [tr_in], [tr_out, tr_out], [law], [law, law])
    rho, v, _, _ = M.primitives(law, tr_in)
    assert res.q_in[0] == pytest.approx(float(rho * v), rel=1e-12)
    assert res.q_out[0] == pytest.approx(res.q_out[1], rel=1e-14)
    assert res.q_out[0] == pytest.approx(0.5 * res.q_in[0], rel=1e-14)
    # conservation of the prescribed fluxes, per component
    np.testing.assert_allclose(
        np.sum(res.flux_in, axis=0), np.sum(res.flux_out, axis=0), rtol=1e-12
    )


def test_resolve_zero_demand_gives_zero_fluxes():
    law = law_g(0.0, v_ref=0.1)
    jc = net.Junction(id="J", incoming=(1,), outgoing=(2,),
                      distribution=np.array([[1.0]]), kind="hb")
    vac = M.from_primitives(law, 1e-12, 0.3, 1.0)
    out = M.from_primitives(law, 0.1, 0.3, 1.0)
    res = net.resolve_junction(jc, [vac], [out], [law], [law])
    assert res.q_in[0] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(res.flux_in[0], 0.0, atol=1e-12)
    assert np.allclose(res.flux_out[0], 0.0, atol=1e-12)


def test_resolve_merge_hb_priorities_proportional_to_demand():
    law = law_g(2.0)
    jc = net.Junction(id="J", incoming=(1, 2), outgoing=(3,),
                      distribution=np.array([[1.0, 1.0]]), kind="hb")
    a1 = M.from_primitives(law, 0.3, 0.5, 1.0)
    a2 = M.from_primitives(law, 0.6, 0.25, 1.0)
    # congested-ish outgoing road limits the total
    w_out = 0.3
    rho_jam = net.jam_density(law, w_out, 1.0)
    out = M.make_state(0.98 * rho_jam, 0.98 * rho_jam * w_out, 0.98 * rho_jam)
    res = net.resolve_junction(jc, [a1, a2], [out], [law, law], [law, law])
    d1 = net.demand(law, a1)
    d2 = net.demand(law, a2)
    s = net.supply(law, out)
    assert res.q_in.sum() == pytest.approx(min(d1 + d2, s), rel=1e-10)
    if d1 + d2 > s:
        # supply-limited: split follows the demand-proportional priorities
        assert res.q_in[0] / res.q_in[1] == pytest.approx(d1 / d2, rel=1e-8)


def test_resolve_marker_mixture_flux_weighted():
    law = law_g(2.0)
    jc = net.Junction(id="J", incoming=(1, 2), outgoing=(3,),
                      distribution=np.array([[1.0, 1.0]]), kind="ghmw",
                      priority=np.array([0.5, 0.5]))
    a1 = M.from_primitives(law, 0.2, 0.5, 1.0)
    a2 = M.from_primitives(law, 0.2, 0.5, 2.0)
    out = M.from_primitives(law, 1e-8, 0.5, 1.0)
    res = net.resolve_junction(jc, [a1, a2], [out], [law, law], [law, law])
    _, _, _, c1 = M.primitives(law, a1)
    _, _, _, c2 = M.primitives(law, a2)
    w_mix, c_mix = res.mixtures[0]
    expect_c = (res.q_in[0] * float(c1) + res.q_in[1] * float(c2)) / res.q_in.sum()
    assert c_mix == pytest.approx(expect_c, rel=1e-12)
    # with equal labels the mixture collapses to that label
    res2 = net.resolve_junction(jc, [a1, a1], [out], [law, law], [law, law])
    assert res2.mixtures[0][1] == pytest.approx(float(c1), rel=1e-12)


# ------------------------------------------------------------- network run


def diverge_network(gamma=1.0, n_cells=30, mode=Mode.LOCAL_BP):
    """One incoming road feeding two outgoing roads, constant-ish data."""
    law = law_g(gamma)
    cfg = StepConfig(mode=mode)
    roads = {}

    def simple_sampler(rho0, w0=1.0):
        def sampler(x):
            rho = np.full(np.shape(x), rho0)
            v = w0 - M.pressure(law, rho, rho)
            return M.from_primitives(law, rho, v, 1.0)
        return sampler

    init = {1: 0.1, 2: 0.1, 3: 0.1}
    for rid, rho0 in init.items():
        mesh = msh.Mesh1D(0.0, 1.0, n_cells)
        sam = simple_sampler(rho0)
        bc = dg.junction_ghost()
        states = sam(np.array([0.0, 1.0]))
        bc.left_state = states[0]
        bc.right_state = states[1]
        roads[rid] = build_road(law, mesh, sam, bc, cfg)
    jc = net.Junction(id="A", incoming=(1,), outgoing=(2, 3),
                      distribution=np.array([[0.5], [0.5]]), kind="ghmw",
                      priority=np.array([1.0]))
    return net.Network(roads=roads, junctions=[jc])


def test_network_equal_split_and_conservation():
    network = diverge_network()
    start = network.totals()
    network.run(0.05)
    assert network.junction_flux_imbalance() <= 1e-12
    res = network.resolutions["A"]
    assert res.q_out[0] == pytest.approx(res.q_out[1], rel=1e-13)
    np.testing.assert_allclose(res.q_matrix, 0.5 * np.broadcast_to(res.q_in, (2, 1)), rtol=1e-14)
    # mass change equals net external boundary inflow to round-off
    change = network.totals() - start
    balance = network.external_flux_balance()
    np.testing.assert_allclose(change, balance, rtol=2e-11, atol=1e-13)
    for road in network.roads.values():
        assert road.diag.bp_violations == 0
        assert not road.diag.failed


def test_network_double_wiring_rejected():
    network = diverge_network()
    jc_bad = net.Junction(id="B", incoming=(1,), outgoing=(2,),
                          distribution=np.array([[1.0]]), kind="hb")
    with pytest.raises(ValueError):
        net.Network(roads=network.roads, junctions=[network.junctions[0], jc_bad])


def test_junction_distribution_validation():
    with pytest.raises(ValueError):
        net.Junction(id="X", incoming=(1,), outgoing=(2, 3),
                     distribution=np.array([[0.6], [0.6]]), kind="hb")
    with pytest.raises(ValueError):
        net.Junction(id="X", incoming=(1, 2), outgoing=(3,),
                     distribution=np.array([[1.0, 1.0]]), kind="ghmw")


def test_single_periodic_road_network_degenerates_to_road_step():
    # a junction-free network with one periodic road advances exactly like
    # the standalone solver
    law = law_g(0.0, v_ref=0.01)
    mesh = msh.Mesh1D(-1.0, 1.0, 24)

    def sampler(x):
        rho = 0.05 * (1.0 + np.cos(np.pi * x)) + 1e-8
        return M.from_primitives(law, rho, 0.15, 1.0)

    solo = build_road(law, mesh, sampler, dg.periodic(), StepConfig())
    inside = build_road(law, mesh, sampler, dg.periodic(), StepConfig())
    network = net.Network(roads={1: inside}, junctions=[])
    solo.run(0.01)
    network.run(0.01)
    assert network.t == pytest.approx(solo.t, rel=1e-14)
    np.testing.assert_allclose(network.roads[1].coeffs, solo.coeffs, rtol=1e-13, atol=1e-300)
