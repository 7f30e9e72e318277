#!/usr/bin/env python3
"""Reproduce the three-well benchmark sweep: adaptive vs traditional vs naive
selection over relaxation horizons 5..30, with summary statistics, particle
histograms, and variance-proxy snapshots written as CSVs.

Equivalent to `we-sample run --mode all`, exposed as a script for convenience:

    python scripts/reproduce_three_well.py --reps 1000 --seed 0 --out out/sweep
"""
import argparse
import sys
import tempfile
from pathlib import Path

from weighted_ensemble import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", type=str, default="out/sweep")
    parser.add_argument("--horizons", type=str, default="5,10,15,20,25,30")
    args = parser.parse_args()

    with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as fh:
        fh.write(f"mode = all\nhorizons = {args.horizons}\n")
        cfg = fh.name
    code = cli.main([
        "run", "--config", cfg, "--reps", str(args.reps),
        "--seed", str(args.seed), "--threads", str(args.threads),
        "--out", args.out,
    ])
    Path(cfg).unlink()
    if code == 0:
        print(f"summary: {args.out}/summary.csv")
    return code


if __name__ == "__main__":
    sys.exit(main())
