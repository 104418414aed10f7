"""Build the full evidence package, then validate it.

    python scripts/run_package.py [--out results] [--jobs 4] [--config configs/default.yaml]
"""

import argparse
import os
import sys
import time

from poe_deploy.cli import main


def run():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="results")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config")
    args = p.parse_args()
    # a fixed timestamp makes reruns byte-identical
    os.environ.setdefault("SOURCE_DATE_EPOCH", "1700000000")
    common = ["--out", args.out] + (["--config", args.config] if args.config else [])
    start = time.perf_counter()
    status = main(["all", "--jobs", str(args.jobs)] + common)
    print(f"built in {time.perf_counter() - start:.1f}s")
    if status:
        return status
    return main(["validate"] + common)


if __name__ == "__main__":
    sys.exit(run())
