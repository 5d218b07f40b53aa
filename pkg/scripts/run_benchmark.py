#!/usr/bin/env python3
"""Reproduce the mass-on-car benchmark: audit the shipped initial data,
run both controller designs, and leave CSV/JSON/plot artifacts in runs/.
"""

import sys
from pathlib import Path

from funnelsim.cli import main

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
OUT = ROOT / "runs"


def run():
    rc = 0
    print("== initial-data audit (published initial values are marginally infeasible) ==")
    main(["check-feasibility", "--config", str(SCENARIOS / "bench_paper.json")])

    print("\n== constant-gain controller, reference step size ==")
    rc |= main(
        ["simulate", "--config", str(SCENARIOS / "bench_paper.json"), "--out-dir", str(OUT)]
    )

    print("\n== feasible initial data ==")
    rc |= main(
        ["simulate", "--config", str(SCENARIOS / "bench_feasible.json"), "--out-dir", str(OUT)]
    )

    print("\n== controller comparison (adaptive steps) ==")
    rc |= main(
        [
            "compare",
            "--config",
            str(SCENARIOS / "bench_compare.json"),
            "--out-dir",
            str(OUT),
            "--jobs",
            "2",
        ]
    )
    print(f"\nartifacts in {OUT}/ (render figures with the emitted plot_*.py scripts)")
    return rc


if __name__ == "__main__":
    sys.exit(run())
