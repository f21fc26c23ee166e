"""Command-line experiment harness.

Subcommands:
    run       one scenario (single road or network) -> CSV solution + JSON report
    converge  mesh-refinement study against the exact solution -> table
    suite     every scenario in its default configuration -> summary JSON
    network   run a network description file

Solution CSVs carry the fixed header
    road_id,cell_index,x,rho,y,z,v,w,c
with cell-average values at cell centers; reports are JSON. Outputs are
deterministic for a fixed config and seed (the seed is recorded; nothing
in the solver is stochastic).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import mesh as msh
from .model import DomainError, SBarVariant, primitives
from .network import Network
from .scenarios import (
    NETWORK_SCENARIOS,
    SCENARIOS,
    build_network,
    build_single,
    exact_solution,
    network_description,
    parse_network,
)
from .stepper import AlphaPolicy, Mode, RoadSolver, StepConfig

CSV_HEADER = "road_id,cell_index,x,rho,y,z,v,w,c"
MODES = {m.value: m for m in Mode}

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_EXPECTED_FAILURE = 3


def make_config(args) -> StepConfig:
    return StepConfig(
        cfl=args.cfl,
        mode=MODES[args.mode],
        alpha_policy=AlphaPolicy(args.alpha_policy),
        sbar_variant=SBarVariant(args.sbar),
        skip_constraints=frozenset(int(r) for r in args.skip_constraints.split(",") if r)
        if args.skip_constraints
        else frozenset(),
    )


def fmt(x: float) -> str:
    return f"{x:.17g}"


def write_solution_csv(path: Path, roads: dict[int, RoadSolver]) -> None:
    lines = [CSV_HEADER]
    for rid in sorted(roads):
        road = roads[rid]
        avg = road.coeffs[:, :, 0]
        rho, v, w, c = primitives(road.law, avg, floor=1e-14)
        x = road.mesh.centers
        for j in range(road.mesh.n_cells):
            lines.append(
                ",".join(
                    [str(rid), str(j), fmt(x[j]), fmt(avg[j, 0]), fmt(avg[j, 1]), fmt(avg[j, 2]),
                     fmt(float(v[j])), fmt(float(w[j])), fmt(float(c[j]))]
                )
            )
    path.write_text("\n".join(lines) + "\n")


def diag_report(road: RoadSolver) -> dict:
    d = road.diag
    return {
        "bp_violations": d.bp_violations,
        "worst_slack": None if not np.isfinite(d.worst_slack) else d.worst_slack,
        "min_slacks": {k: v for k, v in sorted(d.min_slacks.items())},
        "widened_bounds": d.widened_bounds,
        "hypothesis_failures": d.hypothesis_failures,
        "steps": d.steps,
        "retries": d.retries,
        "failed": d.failed,
        "failure_time": d.failure_time,
        "violated_constraints": sorted(d.violated_constraints),
        "first_breach": {k: v for k, v in sorted(d.first_breach.items())},
    }


def conservation_report(road: RoadSolver, initial_totals: np.ndarray) -> dict:
    change = road.totals() - initial_totals
    net_flux = road.diag.boundary_flux_in - road.diag.boundary_flux_out
    return {
        "initial": initial_totals.tolist(),
        "final": road.totals().tolist(),
        "boundary_net_inflow": net_flux.tolist(),
        "drift": (change - net_flux).tolist(),
    }


def l1_errors(road: RoadSolver, scn, t: float) -> dict:
    """Cell-average and quadrature L1 errors in rho against the exact state."""
    fine = msh.gauss_legendre(6)
    x = road.mesh.to_global(fine.nodes)
    exact = exact_solution(scn, road.law, x, t)
    vals = msh.eval_poly(road.coeffs, fine.nodes)[:, 0, :]
    quad = float(np.sum(fine.weights * np.abs(vals - exact[..., 0])) * road.mesh.dx)
    avg_exact = np.sum(fine.weights * exact[..., 0], axis=1)
    avg = float(np.abs(road.coeffs[:, 0, 0] - avg_exact).sum() * road.mesh.dx)
    return {"l1_rho_avg": avg, "l1_rho_quad": quad}


def run_single(scn_id: str, args) -> tuple[dict, int]:
    scn = SCENARIOS[scn_id]
    config = make_config(args)
    gamma = args.gamma if args.gamma is not None else scn.default_gamma
    road = build_single(
        scn, config, gamma=gamma, kappa=args.kappa, n_cells=args.cells, v_ref=args.v_ref
    )
    t_end = args.tend if args.tend is not None else scn.t_end
    initial = road.totals()
    t0 = time.perf_counter()
    road.run(t_end)
    elapsed = time.perf_counter() - t0
    report = {
        "scenario": scn_id,
        "kind": "single",
        "mode": config.mode.value,
        "gamma": gamma,
        "kappa": args.kappa if args.kappa is not None else gamma + 1.0,
        "v_ref": args.v_ref if args.v_ref is not None else scn.v_ref,
        "cells": args.cells if args.cells is not None else scn.default_cells,
        "cfl": config.cfl,
        "t_end": t_end,
        "t_reached": road.t,
        "seed": args.seed,
        "runtime_s": elapsed,
        "diagnostics": diag_report(road),
        "conservation": conservation_report(road, initial),
    }
    if scn.has_exact and not road.diag.failed:
        report["errors"] = l1_errors(road, scn, road.t)
    code = EXIT_EXPECTED_FAILURE if road.diag.failed else EXIT_OK
    return report, code, {0: road}


def run_network(name_or_path: str, args) -> tuple[dict, int]:
    config = make_config(args)
    if name_or_path in NETWORK_SCENARIOS:
        desc = network_description(name_or_path)
    else:
        with open(name_or_path) as fh:
            desc = json.load(fh)
    if args.gamma is not None:
        for r in desc["roads"]:
            r["law"]["gamma"] = args.gamma
            r["law"]["kappa"] = args.kappa if args.kappa is not None else args.gamma + 1.0
    if args.cells is not None:
        for r in desc["roads"]:
            r["cells"] = args.cells
    if args.v_ref is not None:
        for r in desc["roads"]:
            r["law"]["v_ref"] = args.v_ref
    network = parse_network(desc, config)
    t_end = args.tend if args.tend is not None else float(desc.get("t_end", 0.1))
    initial = {rid: road.totals() for rid, road in network.roads.items()}
    total0 = network.totals()
    t0 = time.perf_counter()
    network.run(t_end)
    elapsed = time.perf_counter() - t0
    change = network.totals() - total0
    balance = network.external_flux_balance()
    failed = any(road.diag.failed for road in network.roads.values())
    report = {
        "scenario": name_or_path,
        "kind": "network",
        "mode": config.mode.value,
        "cfl": config.cfl,
        "t_end": t_end,
        "t_reached": network.t,
        "seed": args.seed,
        "runtime_s": elapsed,
        "roads": {str(rid): diag_report(road) for rid, road in sorted(network.roads.items())},
        "junction_flux_imbalance": network.junction_flux_imbalance(),
        "saturated_resolutions": network.saturated_resolutions,
        "conservation": {
            "initial_total": total0.tolist(),
            "final_total": network.totals().tolist(),
            "external_net_inflow": balance.tolist(),
            "drift": (change - balance).tolist(),
        },
    }
    code = EXIT_EXPECTED_FAILURE if failed else EXIT_OK
    return report, code, network.roads


def cmd_run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sid = args.scenario
    if sid in SCENARIOS:
        report, code, roads = run_single(sid, args)
    elif sid in NETWORK_SCENARIOS or Path(sid).exists():
        report, code, roads = run_network(sid, args)
    else:
        print(f"unknown scenario {sid!r}; known: {sorted(SCENARIOS) + list(NETWORK_SCENARIOS)}",
              file=sys.stderr)
        return EXIT_BAD_CONFIG
    tag = f"{Path(sid).stem}_{report['mode']}"
    write_solution_csv(out / f"{tag}.csv", roads)
    (out / f"{tag}.json").write_text(json.dumps(report, indent=1) + "\n")
    print(f"{sid}: t={report['t_reached']:.6g} -> {out / (tag + '.csv')}")
    if code != EXIT_OK:
        print(json.dumps({"failure": report.get("diagnostics", report.get("roads"))}) [:400])
    return code


def cmd_converge(args) -> int:
    scn = SCENARIOS[args.scenario]
    if not scn.has_exact:
        print(f"scenario {args.scenario} has no exact solution", file=sys.stderr)
        return EXIT_BAD_CONFIG
    config = make_config(args)
    gamma = args.gamma if args.gamma is not None else scn.default_gamma
    cells = [int(c) for c in args.cells_list.split(",")]
    rows = []
    for n in cells:
        road = build_single(scn, config, gamma=gamma, kappa=args.kappa, n_cells=n, v_ref=args.v_ref)
        road.run(args.tend if args.tend is not None else scn.t_end)
        errs = l1_errors(road, scn, road.t)
        rows.append({"cells": n, **errs, "bp_violations": road.diag.bp_violations})
    for i in range(1, len(rows)):
        for key in ("l1_rho_avg", "l1_rho_quad"):
            e0, e1 = rows[i - 1][key], rows[i][key]
            rows[i][f"order_{key[-4:]}"] = float(np.log2(e0 / e1)) if e1 > 0 else float("inf")
    table = {"scenario": args.scenario, "gamma": gamma, "mode": config.mode.value, "rows": rows}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"convergence_{args.scenario}_gamma{gamma:g}.json"
    path.write_text(json.dumps(table, indent=1) + "\n")
    for row in rows:
        print(row)
    print(f"-> {path}")
    return EXIT_OK


def suite_jobs() -> list[tuple[str, dict]]:
    """Every scenario id with the gamma values it is reported for."""
    jobs = []
    for sid, scn in SCENARIOS.items():
        for g in scn.gammas:
            jobs.append((sid, {"gamma": g}))
    for name in NETWORK_SCENARIOS:
        if name == "ex5_6":
            jobs.append((name, {"gamma": 0.0}))
            jobs.append((name, {"gamma": 2.0}))
        else:
            jobs.append((name, {}))
    return jobs


def cmd_suite(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    worst = EXIT_OK
    for sid, overrides in suite_jobs():
        sub = argparse.Namespace(**vars(args))
        sub.scenario = sid
        sub.gamma = overrides.get("gamma", None)
        if sid in SCENARIOS:
            report, code, _ = run_single(sid, sub)
        else:
            report, code, _ = run_network(sid, sub)
        entry = {
            "scenario": sid, "gamma": sub.gamma, "exit": code,
            "t_reached": report["t_reached"], "runtime_s": report["runtime_s"],
        }
        if sid in SCENARIOS:
            entry["bp_violations"] = report["diagnostics"]["bp_violations"]
        else:
            entry["bp_violations"] = sum(r["bp_violations"] for r in report["roads"].values())
            entry["junction_flux_imbalance"] = report["junction_flux_imbalance"]
        summary.append(entry)
        worst = max(worst, code)
        print(entry)
    (out / "suite_summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return worst


def cmd_network(args) -> int:
    report, code, roads = run_network(args.file, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tag = Path(args.file).stem + f"_{report['mode']}"
    write_solution_csv(out / f"{tag}.csv", roads)
    (out / f"{tag}.json").write_text(json.dumps(report, indent=1) + "\n")
    print(f"network {args.file}: t={report['t_reached']:.6g}")
    return code


def add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--v-ref", dest="v_ref", type=float, default=None)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--cfl", type=float, default=0.08)
    p.add_argument("--mode", choices=sorted(MODES), default=Mode.LOCAL_BP.value)
    p.add_argument("--tend", type=float, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha-policy", dest="alpha_policy",
                   choices=[a.value for a in AlphaPolicy], default=AlphaPolicy.STANDARD.value)
    p.add_argument("--sbar", choices=[s.value for s in SBarVariant],
                   default=SBarVariant.STANDARD.value)
    p.add_argument("--skip-constraints", dest="skip_constraints", default="",
                   help="comma-separated constraint indices (3..7) the limiter skips")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="arznet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--scenario", required=True)
    add_common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_conv = sub.add_parser("converge", help="mesh refinement study")
    p_conv.add_argument("--scenario", default="ex5_1")
    p_conv.add_argument("--cells-list", dest="cells_list", default="10,20,40,80,160,320")
    add_common(p_conv)
    p_conv.set_defaults(fn=cmd_converge)

    p_suite = sub.add_parser("suite", help="run the full experiment suite")
    add_common(p_suite)
    p_suite.set_defaults(fn=cmd_suite)

    p_net = sub.add_parser("network", help="run a network description file")
    p_net.add_argument("--file", required=True)
    add_common(p_net)
    p_net.set_defaults(fn=cmd_network)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DomainError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
