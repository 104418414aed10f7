"""Pivot of mean gap to the frozen actor, variant x method, from a built package.

    python scripts/degradation_table.py results
"""

import sys
from pathlib import Path

from poe_deploy.experiments import read_csv


def run(out="results"):
    rows = read_csv(Path(out) / "degradation_pivot.csv")
    methods = list(dict.fromkeys(r["method_id"] for r in rows))
    variants = list(dict.fromkeys(r["variant"] for r in rows))
    gap = {(r["variant"], r["method_id"]): float(r["mean_gap"]) for r in rows}
    print(f"{'variant':<14}" + "".join(f"{m:>14}" for m in methods))
    for v in variants:
        print(f"{v:<14}" + "".join(f"{gap[v, m]:14.2f}" for m in methods))


if __name__ == "__main__":
    run(*sys.argv[1:2])
