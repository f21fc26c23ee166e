"""Regenerate the stored reference solutions (8x-refined self-references)
used by the visual-regression tests, plus their L1 thresholds."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from arznet.cli import run_network, run_single, write_solution_csv

REFS = Path(__file__).resolve().parent.parent / "refs"

CASES = [
    {"id": "ex5_2", "gamma": 2.0, "cells": 300, "kind": "single"},
    {"id": "t1a", "gamma": 2.0, "cells": 300, "kind": "single"},
    {"id": "ex5_8", "gamma": None, "cells": 150, "kind": "network"},
]


def ns(**kw):
    base = dict(gamma=None, kappa=None, v_ref=None, cells=None, cfl=0.08,
                mode="local-bp", tend=None, out="out", seed=0,
                alpha_policy="standard", sbar="standard", skip_constraints="")
    base.update(kw)
    return argparse.Namespace(**base)


def averages_by_road(roads):
    out = {}
    for rid, road in roads.items():
        out[rid] = (road.mesh.centers, road.coeffs[:, 0, 0].copy(), road.mesh.dx)
    return out


def l1_against_ref(coarse, fine):
    """L1 distance of piecewise-constant cell averages, coarse vs pooled fine."""
    total = 0.0
    for rid, (x, rho, dx) in coarse.items():
        _, rho_f, dx_f = fine[rid]
        ratio = len(rho_f) // len(rho)
        pooled = rho_f.reshape(len(rho), ratio).mean(axis=1)
        total += float(np.abs(rho - pooled).sum() * dx)
    return total


def main():
    REFS.mkdir(exist_ok=True)
    thresholds = {}
    for case in CASES:
        sid, g = case["id"], case["gamma"]
        run = run_single if case["kind"] == "single" else run_network
        _, _, coarse_roads = run(sid, ns(gamma=g, cells=case["cells"]))
        _, _, fine_roads = run(sid, ns(gamma=g, cells=8 * case["cells"]))
        write_solution_csv(REFS / f"{sid}_ref8x.csv", fine_roads)
        dist = l1_against_ref(averages_by_road(coarse_roads), averages_by_road(fine_roads))
        thresholds[sid] = {"l1_rho": dist, "threshold": 2.0 * dist, "cells": case["cells"],
                           "gamma": g}
        print(f"{sid}: L1(coarse, 8x ref) = {dist:.4e}")
    (REFS / "thresholds.json").write_text(json.dumps(thresholds, indent=1) + "\n")


if __name__ == "__main__":
    main()
