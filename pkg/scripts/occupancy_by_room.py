"""Fraction of visits per room from a rooms run's heatmap CSVs.

Usage: python scripts/occupancy_by_room.py runs/compare-rooms/surprisal
"""

import argparse
from pathlib import Path

import numpy as np

# The stored grid starts at column -8 (the dead-end corridor) with one-cell bins; rooms are 8 columns wide.
NAMES = ["corridor", "room 0 (start)", "room 1 (TV)", "room 2", "room 3 (goal)"]


def by_room(counts: np.ndarray) -> np.ndarray:
    cols = counts.sum(axis=0)
    per = np.array([cols[i * 8:(i + 1) * 8].sum() for i in range(len(NAMES))], dtype=float)
    return per / per.sum()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("run_dir", type=Path)
    args = parser.parse_args()
    paths = sorted(args.run_dir.glob("seed_*/heatmap.csv"))
    if not paths:
        raise SystemExit(f"no seed_*/heatmap.csv under {args.run_dir}")
    print("seed | " + " | ".join(NAMES))
    for p in paths:
        share = by_room(np.loadtxt(p, delimiter=","))
        print(p.parent.name + " | " + " | ".join(f"{x:.3f}" for x in share))


if __name__ == "__main__":
    main()
