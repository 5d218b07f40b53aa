#!/usr/bin/env python3
"""Sensitivity sweeps on the feasible benchmark: chain rate k (every value
at or above the alpha+2 bound completes) and the initial z_dot component
(the stage-margin column shows the feasibility boundary)."""

import sys
from pathlib import Path

from funnelsim.cli import main

ROOT = Path(__file__).resolve().parent.parent
CONFIG = str(ROOT / "scenarios" / "bench_feasible.json")
OUT = str(ROOT / "runs")


def run():
    rc = main(
        ["sweep", "--config", CONFIG, "--param", "k", "--values", "3,4,6,10",
         "--out-dir", OUT, "--jobs", "2"]
    )
    print()
    main(
        ["sweep", "--config", CONFIG, "--param", "initial_state.z_dot",
         "--values=-0.015,-0.005,0,0.005,0.015", "--out-dir", OUT, "--jobs", "2",
         "--set", "output.stem=zdot_sweep"]
    )
    return rc


if __name__ == "__main__":
    sys.exit(run())
