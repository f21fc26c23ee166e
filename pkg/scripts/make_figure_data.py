"""Generate the per-scenario coarse solution CSVs and figure specs used by
the figure-rendering tests (refs/figures/)."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from arznet.cli import run_network, run_single, write_solution_csv

REFS = Path(__file__).resolve().parent.parent / "refs" / "figures"


def ns(**kw):
    base = dict(gamma=None, kappa=None, v_ref=None, cells=None, cfl=0.08,
                mode="local-bp", tend=None, out="out", seed=0,
                alpha_policy="standard", sbar="standard", skip_constraints="")
    base.update(kw)
    return argparse.Namespace(**base)


SINGLE = [
    ("ex5_1", dict(gamma=1.0, cells=40)),
    ("ex5_2", dict(gamma=2.0, cells=60, tend=0.1)),
    ("t1a", dict(gamma=2.0, cells=60, tend=0.05)),
    ("ex5_4", dict(cells=60, tend=0.005)),
]
NETWORK = [
    ("ex5_5", dict(cells=40, tend=0.05)),
    ("ex5_6", dict(gamma=0.0, cells=40, tend=0.02)),
    ("ex5_7_ghmw", dict(cells=40, tend=0.01)),
    ("ex5_8", dict(cells=40, tend=0.02)),
    ("ex5_9", dict(cells=20, tend=0.02)),
]


def main():
    REFS.mkdir(parents=True, exist_ok=True)
    specs = []
    for sid, kw in SINGLE:
        _, _, roads = run_single(sid, ns(**kw))
        write_solution_csv(REFS / f"{sid}.csv", roads)
        specs.append({
            "kind": "profiles", "title": sid, "inputs": [f"{sid}.csv"],
            "quantities": ["rho", "v"],
        })
        print("wrote", sid)
    for sid, kw in NETWORK:
        _, _, roads = run_network(sid, ns(**kw))
        write_solution_csv(REFS / f"{sid}.csv", roads)
        spec = {"kind": "network_grid", "title": sid, "inputs": [f"{sid}.csv"],
                "quantities": ["rho"]}
        if sid == "ex5_9":
            spec["roads"] = [1, 26, 44]
        specs.append(spec)
        print("wrote", sid)
    # t-suite profile figure reusing t1a, plus a convergence figure stub
    (REFS / "specs.json").write_text(json.dumps(specs, indent=1) + "\n")
    print("specs.json with", len(specs), "figures")


if __name__ == "__main__":
    main()
