#!/usr/bin/env python3
"""Can adaptive weighting tell a useful source from a distractor?

Two sources of 2000 examples each: a fresh draw from the target's own label
function (flip 0.0) and a flip-1.0 distractor. Joint training with adaptive
weights should end with more weight on the copy than on the distractor and
at least match the fixed-weight baseline's target accuracy. ~1 minute.

    python scripts/weight_identification.py [--out DIR]
"""

import argparse
import csv
import sys
from pathlib import Path

CONFIG = Path(__file__).parent / "configs" / "weight_identification.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    from tawt_lab.harness import main as lab

    run_args = ["run", "--config", str(CONFIG)]
    if args.out:
        run_args += ["--out", args.out]
    rc = lab(run_args)
    if rc != 0:
        return rc

    out_dir = Path(args.out) if args.out else Path("results/weight_identification")
    acc = {}
    with open(out_dir / "summary.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            acc.setdefault(row["arm"], []).append(float(row["final_target_acc"]))

    print("\nfinal weights per seed (adaptive joint arm; w_0 is the target)")
    wins = 0
    for seed_dir in sorted((out_dir / "runs" / "joint-adaptive").glob("seed*")):
        last = (seed_dir / "n100" / "weights.csv").read_text().splitlines()[-1].split(",")
        target_w, copy_w, distractor_w = (float(x) for x in last[1:4])
        wins += copy_w > distractor_w
        print(
            f"  {seed_dir.name}: target={target_w:.4f} copy={copy_w:.3e} "
            f"distractor={distractor_w:.3e}"
        )
    n = len(acc["joint-adaptive"])
    print(f"copy outweighs distractor in {wins}/{n} seeds")
    for arm, values in sorted(acc.items()):
        print(f"mean accuracy {arm}: {sum(values)/len(values):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
