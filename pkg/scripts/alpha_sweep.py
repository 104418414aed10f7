"""Print the PoE alpha sweep for one goal: validation/test return and KL from the actor.

    python scripts/alpha_sweep.py --goal G2
"""

import argparse

from poe_deploy import alpha_select as asel
from poe_deploy.config import RunConfig, load_config
from poe_deploy.experiments import alpha_grid_results, build_fixture


def run():
    p = argparse.ArgumentParser()
    p.add_argument("--goal", default="G1")
    p.add_argument("--config")
    args = p.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()
    grid = alpha_grid_results(cfg, build_fixture(cfg, with_critic=False), args.goal)
    print(f"{'alpha':>6} {'val_ret':>10} {'test_ret':>10} {'val_kl':>8} {'test_kl':>8}")
    for r in grid:
        print(f"{r.alpha:6.2f} {r.val_return:10.2f} {r.test_return:10.2f} {r.val_kl:8.3f} {r.test_kl:8.3f}")
    print(f"val-best {asel.val_best_select(grid)}, oracle {asel.oracle_select(grid)}")
    for k in cfg.alpha_study.kappas:
        a = asel.kl_budget_select(grid, k)
        print(f"kappa {k:g}: alpha {a}, loss {asel.selection_loss(a, grid):.3f}")


if __name__ == "__main__":
    run()
