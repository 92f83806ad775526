#!/usr/bin/env python3
"""Run the four shipped placement scenarios and print the verdict table.

Usage: python scripts/run_quadrants.py [--workers N]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from wfpc.config import parse_scenario
from wfpc.witness import run_witness_protocol

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--workers", type=int, default=2)
    args = parser.parse_args()

    print(f"{'scenario':<10} {'verdict':<10} {'before':>10} {'after':>10} {'profile d':>10}  time")
    for name in ("none", "chi", "rho", "both"):
        scenario = parse_scenario(CONFIG_DIR / f"witness_quadrant_{name}.yaml")
        model = scenario.build_model()
        state = scenario.build_state(model)
        start = time.monotonic()
        verdict = run_witness_protocol(
            model,
            state,
            scenario.build_family(),
            scenario.build_grid(),
            thresholds=scenario.protocol.thresholds,
            method=scenario.protocol.method,
            stepper=scenario.grid.stepper,
            check_scaling=scenario.protocol.check_scaling,
            workers=args.workers,
        )
        elapsed = time.monotonic() - start
        print(
            f"{name:<10} {verdict.quadrant:<10} "
            f"{verdict.report_before.contrast:>10.2e} "
            f"{verdict.report_after.contrast:>10.2e} "
            f"{verdict.profile_distance:>10.2e}  {elapsed:4.1f}s"
        )


if __name__ == "__main__":
    main()
