"""Command-line runner.

    poe-deploy <command> [--config PATH] [--out DIR] [--seed-override 0,1,2] [--jobs N]

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .config import ConfigError, RunConfig, load_config
from .manifest import write_manifest
from .validate import validate_package

COMMANDS = ("audit-equivalence", "rollout", "degrade-prior", "cpi-diagnostic", "alpha-study", "manifest", "validate", "all")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poe-deploy", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="YAML run configuration (defaults apply when omitted)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed-override", help="comma-separated rollout seeds replacing the configured ones")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for rollout cells")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed_override:
        try:
            seeds = [int(s) for s in args.seed_override.split(",") if s.strip()]
        except ValueError as e:
            raise ConfigError(f"bad --seed-override: {e}") from e
        cfg = cfg.with_seeds(seeds)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def run(args) -> int:
    cfg = _config(args)
    out = args.out
    if args.command == "validate":
        problems = validate_package(out)
        for msg in problems:
            print(f"FAIL {msg}")
        print("STATUS: PASS" if not problems else "STATUS: FAIL")
        return 0 if not problems else 1
    if args.command == "manifest":
        path = write_manifest(out, cfg.to_dict(), cfg.seeds)
        print(f"wrote {path}")
        return 0

    out.mkdir(parents=True, exist_ok=True)
    ex.write_config_echo(cfg, out)
    status = 0
    cmd = args.command
    fixture = None
    if cmd in ("rollout", "all"):
        fixture = ex.build_fixture(cfg)
    elif cmd in ("audit-equivalence", "degrade-prior", "alpha-study"):
        fixture = ex.build_fixture(cfg, with_critic=False)

    if cmd in ("audit-equivalence", "all"):
        rows, ok = ex.cmd_audit_equivalence(cfg, out, fixture)
        worst = max(max(r["max_mean_abs_diff"], r["max_variance_residual"]) for r in rows)
        print(f"audit-equivalence: {len(rows)} rows, worst residual {worst:.3g} ({'ok' if ok else 'above tolerance'})")
        status = max(status, 0 if ok else 1)
    if cmd in ("rollout", "all"):
        res = ex.cmd_rollout_package(cfg, out, args.jobs, fixture)
        verdicts = ", ".join(f"{d['goal_id']}={d['verdict']}" for d in res["diagnostics"])
        print(f"rollout: {len(res['episodes'])} episodes (+{len(res['awr_episodes'])} AWR); verdicts {verdicts}")
    if cmd in ("degrade-prior", "all"):
        res = ex.cmd_prior_degradation(cfg, out, args.jobs, fixture)
        print(f"degrade-prior: {len(res['episodes'])} episodes, {len(res['cells'])} cells")
    if cmd in ("cpi-diagnostic", "all"):
        rows = ex.cmd_cpi_diagnostic(cfg, out)
        held = sum(r["bound_holds"] for r in rows)
        print(f"cpi-diagnostic: {len(rows)} rows, bound holds on {held}")
    if cmd in ("alpha-study", "all"):
        res = ex.cmd_alpha_study(cfg, out, fixture)
        print(f"alpha-study: {len(res['study'])} rows")
    if cmd == "all":
        print(f"wrote {write_manifest(out, cfg.to_dict(), cfg.seeds)}")
    return status


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
