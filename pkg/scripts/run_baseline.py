"""
Full-scale baseline experiment: solve the stationary system on the 200x200
grid, simulate the noiseless limit cycle from empty storage, estimate the
invariant measure under fringe noise, and emit gnuplot scripts.

Runtime is dominated by the solve (a few hundred thousand explicit steps;
expect tens of minutes at the default step).  --dt 1e-5 reproduces the very
conservative historical step at ~50x the cost.

Usage:
  python scripts/run_baseline.py --out runs/baseline [--grid 200,200]
                                 [--dt 5e-4] [--seed 1]
"""

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from cartelstore.cli import main as cli  # noqa: E402

CONFIG = str(REPO / "configs" / "baseline.cfg")


def run(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/baseline")
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
