#!/usr/bin/env python3
"""Plot trajectories.csv produced by `wfpc simulate` or `wfpc witness`.

Dev tool, not a product surface: needs matplotlib.

Usage: python scripts/plot_trajectories.py out/simulate_commuting/trajectories.csv
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("csv_path")
    parser.add_argument("--out", default="trajectories.png")
    args = parser.parse_args()

    curves = defaultdict(lambda: ([], []))
    with open(args.csv_path) as fh:
        for row in csv.DictReader(fh):
            ts, ps = curves[row["mask_id"]]
            ts.append(float(row["t"]))
            ps.append(float(row["p"]))

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, (ts, ps) in sorted(curves.items()):
        ax.plot(ts, ps, lw=0.8, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("excited-manifold population")
    if len(curves) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out} ({len(curves)} masks)")


if __name__ == "__main__":
    main()
