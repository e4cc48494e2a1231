"""
Full-scale storage-cost experiment (k_max = 0.07, cubic holding cost): same
pipeline as run_baseline.py on the appendix configuration.  The near-full
dwell of the cycle disappears under the holding cost; compare the trajectory
CSVs of the two runs.

Usage:
  python scripts/run_appendix.py --out runs/appendix [--grid 200,200]
                                 [--dt 5e-4] [--seed 1]
"""

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from cartelstore.cli import main as cli  # noqa: E402

CONFIG = str(REPO / "configs" / "appendix.cfg")


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/appendix")
    ap.add_argument("--grid", default="200,200")
    ap.add_argument("--dt", default="5e-4")
    ap.add_argument("--seed", default="1")
    args = ap.parse_args(argv)
    out = args.out
    rc = cli(["solve", CONFIG, out, "--grid", args.grid, "--dt", args.dt,
              "--max-iters", "5000000"])
    if rc != 0:
        return rc
    rc = cli(["simulate", out, "--k0", "0.0", "--z0", "0.5", "--T", "60"])
    if rc != 0:
        return rc
    rc = cli(["measure", out, "--T", "2000", "--burn-in", "100",
              "--seed", args.seed])
    if rc != 0:
        return rc
    return cli(["export-plots", out])


if __name__ == "__main__":
    sys.exit(run())
