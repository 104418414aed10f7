"""Package validator: coverage, finiteness, seeds, matched pairs, hashes."""

from __future__ import annotations

import json
import math
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import awr_methods, load_schema, main_methods, matched_pairs, read_csv
from .manifest import MANIFEST_NAME, verify_manifest

MATCHED_FIELDS = ("goal_weighted_return", "forward_sum", "control_sum", "alive_sum", "length")


def _coverage(rows, methods, goals, seeds, episodes, name) -> list[str]:
    expected = {(m, g, str(s), str(e)) for m in methods for g in goals for s in seeds for e in range(episodes)}
    seen = [(r["method_id"], r["goal_id"], r["seed"], r["episode"]) for r in rows]
    problems = []
    if len(seen) != len(set(seen)):
        problems.append(f"{name}: duplicate episode keys")
    missing, extra = expected - set(seen), set(seen) - expected
    if missing:
        problems.append(f"{name}: {len(missing)} expected episodes missing, e.g. {sorted(missing)[0]}")
    if extra:
        problems.append(f"{name}: {len(extra)} unexpected episodes, e.g. {sorted(extra)[0]}")
    return problems


def validate_package(out) -> list[str]:
    out = Path(out)
    problems = list(verify_manifest(out))
    try:
        cfg = load_config(out / "config.yaml")
    except ConfigError as e:
        return problems + [f"config.yaml: {e}"]
    schema = load_schema()

    for path in sorted(out.glob("*.csv")):
        if path.name not in schema:
            problems.append(f"{path.name}: not described by the schema")
            continue
        rows = read_csv(path)
        header = list(rows[0]) if rows else path.read_text(encoding="utf-8").splitlines()[0].split(",")
        if header != list(schema[path.name]["columns"]):
            problems.append(f"{path.name}: header does not match the schema")
        for i, r in enumerate(rows):
            for k, v in r.items():
                try:
                    x = float(v)
                except (TypeError, ValueError):
                    continue
                if not math.isfinite(x):
                    problems.append(f"{path.name}: non-finite {k} on row {i + 1}")

    goals = list(cfg.goals)
    seeds = list(cfg.seeds)
    manifest_path = out / MANIFEST_NAME
    if manifest_path.is_file():
        try:
            recorded = json.loads(manifest_path.read_text(encoding="utf-8")).get("seeds")
        except json.JSONDecodeError:
            recorded = None
        if recorded is not None and recorded != seeds:
            problems.append("manifest seeds differ from config seeds")

    episodes_path = out / "episodes.csv"
    if episodes_path.is_file():
        rows = read_csv(episodes_path)
        methods = [s.method_id for s in main_methods(cfg)]
        problems += _coverage(rows, methods, goals, seeds, cfg.episodes_per_seed, "episodes.csv")
        if {int(r["seed"]) for r in rows} - set(seeds):
            problems.append("episodes.csv: seeds outside the configured set")
        index = {(r["method_id"], r["goal_id"], r["seed"], r["episode"]): r for r in rows}
        for a, b in matched_pairs(cfg):
            for key, ra in index.items():
                if key[0] != a:
                    continue
                rb = index.get((b,) + key[1:])
                if rb is None or any(ra[f] != rb[f] for f in MATCHED_FIELDS):
                    problems.append(f"episodes.csv: {a} and {b} differ at {key[1:]}")
                    break
    awr_path = out / "awr_episodes.csv"
    if awr_path.is_file():
        methods = [s.method_id for s in awr_methods(cfg)]
        problems += _coverage(read_csv(awr_path), methods, goals, seeds, cfg.episodes_per_seed, "awr_episodes.csv")
    comp_path = out / "method_comparison.csv"
    if comp_path.is_file():
        for r in read_csv(comp_path):
            if r["comparison"] == "matched_pair" and any(float(r[c]) != 0 for c in ("mean_diff", "ci_low", "ci_high")):
                problems.append(f"method_comparison.csv: nonzero matched difference {r['method_a']} vs {r['method_b']} on {r['goal_id']}")
    return problems
