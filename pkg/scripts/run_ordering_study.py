#!/usr/bin/env python3
"""Multi-seed ordering study: PnP-DL vs PnP-UWT vs CS-TV vs L+S.

Repeats the synthetic study at R = 6, 8, 10: parameters are swept on the
first seed, the winners are pinned and evaluated on the remaining seeds,
and the per-solver mean rSNR is printed per acceleration.

Usage: python scripts/run_ordering_study.py [--outdir DIR] [--seeds 0 1 2]
       [--weights weights/cine_denoiser_desk.pnpd]
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from pnpcine.harness import ExperimentConfig, SolverSpec, run_experiment
from pnpcine.phantom import PhantomSpec

REPO = Path(__file__).resolve().parents[1]


def solver_grid(weights):
    return {
        "pnp-dl": ("admm-pnp", {"denoiser": f"cnn:{weights}", "outer_iters": 20,
                                "cg_iters": 5, "nu": [0.3, 1.0]}),
        "pnp-uwt": ("admm-pnp", {"denoiser": ["uwt:0.0005", "uwt:0.001", "uwt:0.002",
                                              "uwt:0.004"],
                                 "outer_iters": 40, "cg_iters": 5, "nu": 1.0}),
        "cs-tv": ("cs-tv", {"lambda": [0.0005, 0.001, 0.002, 0.004],
                            "outer_iters": 40, "cg_iters": 5}),
        "lps": ("lps", {"lambda_l": [0.01, 0.03], "lambda_s": [0.005, 0.02],
                        "iters": 40}),
    }


def config_for(seed, grid, accelerations=(6.0, 8.0, 10.0)):
    return ExperimentConfig(
        phantom=PhantomSpec(nx=64, ny=64, nt=16),
        snr_db=26.0,
        nc=8,
        accelerations=tuple(accelerations),
        calib_lines=4,
        maps="walsh",
        solvers=tuple(
            SolverSpec(name=name, label=label, params=params)
            for label, (name, params) in grid.items()
        ),
        seed=seed,
    )


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--outdir", default="ordering_study")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--weights", default=str(REPO / "weights" / "cine_denoiser_desk.pnpd"))
    args = ap.parse_args()

    out = Path(args.outdir)
    grid = solver_grid(args.weights)
    t0 = time.time()

    sweep_seed, eval_seeds = args.seeds[0], args.seeds[1:]
    print(f"sweeping parameters on seed {sweep_seed} ...")
    sweep = run_experiment(config_for(sweep_seed, grid), out / f"seed{sweep_seed}")
    best = {}
    for cell in sweep["table"]:
        if cell["status"] != "ok":
            print(f"FAILED cell: {cell}")
            return 1
        best[(cell["label"], cell["R"])] = (cell["params"], [cell["rsnr_db"]])

    for seed in eval_seeds:
        for R in (6.0, 8.0, 10.0):
            pinned = {label: (name, best[(label, R)][0]) for label, (name, _) in grid.items()}
            rep = run_experiment(
                config_for(seed, pinned, accelerations=(R,)), out / f"seed{seed}_R{R:g}"
            )
            for cell in rep["table"]:
                if cell["status"] != "ok":
                    print(f"FAILED cell: {cell}")
                    return 1
                best[(cell["label"], R)][1].append(cell["rsnr_db"])

    summary = {}
    print(f"\nmean rSNR (dB) over seeds {args.seeds}:")
    labels = list(grid)
    print(f"{'R':>4}  " + "  ".join(f"{k:>9}" for k in labels))
    for R in (6.0, 8.0, 10.0):
        means = {k: float(np.mean(best[(k, R)][1])) for k in labels}
        summary[f"R{R:g}"] = {
            "mean_rsnr_db": means,
            "params": {k: best[(k, R)][0] for k in labels},
        }
        print(f"{R:>4g}  " + "  ".join(f"{means[k]:>9.3f}" for k in labels))

    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"\ntotal {time.time() - t0:.0f}s; summary in {out / 'summary.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
