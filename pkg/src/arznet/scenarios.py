"""The experiment suite: single-road and network scenario definitions.

Single-road scenarios carry their initial data, domain, end time, and
reference parameters; network scenarios live as JSON descriptions under
data/networks/ and are materialized through parse_network. Scenario ids:

    ex5_1                smooth near-vacuum translation (convergence study)
    ex5_2                Riemann problem, oscillation comparison
    t1a t1b t2a t2b t3   Riemann suite with vacuum states
    ex5_4                local vs global domains, velocity overshoot
    ex5_5 .. ex5_9       road networks (ex5_7 in hb and ghmw variants)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from . import dg, mesh as msh
from .model import PressureLaw, from_primitives, make_state, pressure
from .network import Junction, Network
from .setup import build_road
from .stepper import Mode, RoadSolver, StepConfig

__all__ = [
    "SingleRoadScenario",
    "SCENARIOS",
    "NETWORK_SCENARIOS",
    "build_single",
    "build_network",
    "parse_network",
    "network_description",
    "exact_solution",
]


@dataclass(frozen=True)
class SingleRoadScenario:
    id: str
    x_left: float
    x_right: float
    t_end: float
    v_ref: float
    gammas: tuple[float, ...]
    default_gamma: float
    default_cells: int
    periodic: bool
    # piecewise-constant Riemann data ((rho, v, c) left/right + split) or a
    # smooth profile marker handled in _sampler
    left: tuple[float, float, float] | None = None
    right: tuple[float, float, float] | None = None
    split: float | None = None
    three_state: tuple | None = None
    smooth: bool = False
    has_exact: bool = False


SCENARIOS: dict[str, SingleRoadScenario] = {
    s.id: s
    for s in [
        SingleRoadScenario(
            id="ex5_1", x_left=-1.0, x_right=1.0, t_end=0.05, v_ref=0.01,
            gammas=(0.0, 1.0, 2.0), default_gamma=0.0, default_cells=160,
            periodic=True, smooth=True, has_exact=True,
        ),
        SingleRoadScenario(
            id="ex5_2", x_left=0.0, x_right=1.0, t_end=0.4, v_ref=1.0,
            gammas=(2.0,), default_gamma=2.0, default_cells=300, periodic=False,
            left=(0.8, 0.1, 1.0), right=(0.5, 0.2, 1.0), split=0.5,
        ),
        SingleRoadScenario(
            id="t1a", x_left=0.0, x_right=1.0, t_end=0.1, v_ref=0.01,
            gammas=(0.0, 2.0), default_gamma=0.0, default_cells=300, periodic=False,
            left=(0.5, 0.2, 1.0), right=(0.9, 2e-11, 1.0), split=0.65,
        ),
        SingleRoadScenario(
            id="t1b", x_left=0.0, x_right=1.0, t_end=0.1, v_ref=0.01,
            gammas=(1.0, 2.0), default_gamma=1.0, default_cells=300, periodic=False,
            left=(0.5, 0.2, 1.1), right=(0.9, 2e-11, 0.9), split=0.65,
        ),
        SingleRoadScenario(
            id="t2a", x_left=0.0, x_right=1.0, t_end=0.1, v_ref=0.01,
            gammas=(0.0, 1.0, 2.0), default_gamma=0.0, default_cells=300, periodic=False,
            left=(1e-12, 0.4, 1.0), right=(0.8, 0.1, 1.0), split=0.65,
        ),
        SingleRoadScenario(
            id="t2b", x_left=0.0, x_right=1.0, t_end=0.1, v_ref=0.01,
            gammas=(0.0, 1.0, 2.0), default_gamma=0.0, default_cells=300, periodic=False,
            left=(1e-12, 10.0, 1.0), right=(0.8, 0.5, 1.0), split=0.65,
        ),
        SingleRoadScenario(
            id="t3", x_left=0.0, x_right=1.0, t_end=0.1, v_ref=0.01,
            gammas=(0.0, 2.0), default_gamma=0.0, default_cells=300, periodic=False,
            left=(0.8, 5e-12, 1.0), right=(1e-11, 0.25, 1.0), split=0.65,
        ),
        SingleRoadScenario(
            id="ex5_4", x_left=0.0, x_right=1.0, t_end=0.0305, v_ref=1.0,
            gammas=(0.0,), default_gamma=0.0, default_cells=300, periodic=False,
            three_state=((1e-12, 10.0, 1.0), 0.25, (0.8, 0.5, 1.0), 0.985, (0.5, 400.0, 1.0)),
        ),
    ]
}

NETWORK_SCENARIOS = ("ex5_5", "ex5_6", "ex5_7_hb", "ex5_7_ghmw", "ex5_8", "ex5_9")


def _sampler(scn: SingleRoadScenario, law: PressureLaw):
    if scn.smooth:

        def smooth(x):
            rho = 0.05 * (1.0 + np.cos(np.pi * x)) + 1e-8
            return from_primitives(law, rho, 0.15, 1.0)

        return smooth
    if scn.three_state is not None:
        s0, b0, s1, b1, s2 = scn.three_state
        states = [np.asarray(from_primitives(law, *s), float) for s in (s0, s1, s2)]

        def three(x):
            out = np.where(
                x[..., None] < b0, states[0], np.where(x[..., None] < b1, states[1], states[2])
            )
            return out

        return three
    left = np.asarray(from_primitives(law, *scn.left), float)
    right = np.asarray(from_primitives(law, *scn.right), float)

    def riemann(x):
        return np.where(x[..., None] <= scn.split, left, right)

    return riemann


def exact_solution(scn: SingleRoadScenario, law: PressureLaw, x: np.ndarray, t: float) -> np.ndarray:
    """Exact states where known (the translating smooth profile)."""
    if not scn.has_exact:
        raise ValueError(f"scenario {scn.id} has no exact solution")
    rho = 0.05 * (1.0 + np.cos(np.pi * (x - 0.15 * t))) + 1e-8
    return from_primitives(law, rho, 0.15, 1.0)


def build_single(
    scn: SingleRoadScenario,
    config: StepConfig,
    *,
    gamma: float | None = None,
    kappa: float | None = None,
    n_cells: int | None = None,
    v_ref: float | None = None,
) -> RoadSolver:
    g = scn.default_gamma if gamma is None else float(gamma)
    law = PressureLaw(
        v_ref if v_ref is not None else scn.v_ref, g, kappa if kappa is not None else g + 1.0
    )
    n = scn.default_cells if n_cells is None else int(n_cells)
    mesh = msh.Mesh1D(scn.x_left, scn.x_right, n)
    sampler = _sampler(scn, law)
    if scn.periodic:
        bc = dg.periodic()
    else:
        ends = sampler(np.array([scn.x_left, scn.x_right]))
        bc = dg.fixed_exterior(ends[0], ends[1])
    return build_road(law, mesh, sampler, bc, config)


# ---------------------------------------------------------------- networks

_EXPR_NAMES = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log,
    "abs": np.abs, "where": np.where, "pi": np.pi, "minimum": np.minimum,
    "maximum": np.maximum,
}


def _field_fn(spec) -> callable:
    """Initial-data field from its JSON description."""
    if isinstance(spec, (int, float)):
        return lambda x: np.full(np.shape(x), float(spec))
    kind = spec["kind"]
    if kind == "const":
        v = float(spec["value"])
        return lambda x: np.full(np.shape(x), v)
    if kind == "piecewise":
        breaks = np.asarray(spec["breaks"], float)
        values = np.asarray(spec["values"], float)
        if len(values) != len(breaks) + 1:
            raise ValueError("piecewise needs len(values) == len(breaks) + 1")

        def pw(x):
            return values[np.searchsorted(breaks, x, side="right")]

        return pw
    if kind == "expr":
        code = compile(spec["expr"], "<network-initial-data>", "eval")

        def ev(x):
            return np.broadcast_to(
                np.asarray(eval(code, {"__builtins__": {}}, {**_EXPR_NAMES, "x": x}), float),
                np.shape(x),
            )

        return ev
    raise ValueError(f"unknown field kind {kind!r}")


def network_description(name: str) -> dict:
    """Load a bundled network description by scenario id."""
    path = resources.files("arznet").joinpath(f"data/networks/{name}.json")
    return json.loads(path.read_text())


def parse_network(description, config: StepConfig) -> Network:
    """Materialize a network from its JSON description (dict or path)."""
    if isinstance(description, (str,)):
        with open(description) as fh:
            description = json.load(fh)
    roads: dict[int, RoadSolver] = {}
    junction_ends: set[tuple[int, str]] = set()
    junctions = []
    for jspec in description.get("junctions", []):
        jc = Junction(
            id=str(jspec["id"]),
            incoming=tuple(int(r) for r in jspec["incoming"]),
            outgoing=tuple(int(r) for r in jspec["outgoing"]),
            distribution=np.asarray(jspec["distribution"], float),
            kind=jspec.get("kind", "hb"),
            priority=None if jspec.get("priority") in (None, "demand") else np.asarray(jspec["priority"], float),
        )
        junctions.append(jc)
        junction_ends.update(((r, "down") for r in jc.incoming))
        junction_ends.update(((r, "up") for r in jc.outgoing))

    for rspec in description["roads"]:
        rid = int(rspec["id"])
        law_spec = rspec["law"]
        gamma = float(law_spec["gamma"])
        law = PressureLaw(
            float(law_spec.get("v_ref", 0.01)), gamma, float(law_spec.get("kappa", gamma + 1.0))
        )
        length = float(rspec.get("length", 1.0))
        mesh = msh.Mesh1D(0.0, length, int(rspec["cells"]))
        init = rspec["initial"]
        rho_fn = _field_fn(init["rho"])
        c_fn = _field_fn(init.get("c", 1.0))
        if "v" in init:
            v_fn = _field_fn(init["v"])

            def sampler(x, rho_fn=rho_fn, v_fn=v_fn, c_fn=c_fn, law=law):
                rho = rho_fn(x)
                return from_primitives(law, rho, v_fn(x), c_fn(x))

        else:
            w_fn = _field_fn(init["w"])

            def sampler(x, rho_fn=rho_fn, w_fn=w_fn, c_fn=c_fn, law=law):
                rho = rho_fn(x)
                c = c_fn(x)
                w = w_fn(x)
                y = rho * w
                return make_state(rho, y, c * rho)

        ends = np.asarray(sampler(np.array([0.0, length])), float)
        bc = dg.junction_ghost()
        bc.left_state = ends[0]
        bc.right_state = ends[1]
        roads[rid] = build_road(law, mesh, sampler, bc, config)

    return Network(roads=roads, junctions=junctions)


def build_network(name: str, config: StepConfig, *, cells: int | None = None) -> Network:
    desc = network_description(name)
    if cells is not None:
        for r in desc["roads"]:
            r["cells"] = int(cells)
    return parse_network(desc, config)
