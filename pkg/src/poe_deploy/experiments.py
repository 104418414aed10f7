"""Experiment commands: each builds the fixture it needs and writes CSVs to an output directory."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import alpha_select as asel
from .config import RunConfig, dump_config
from .critic import LinearCritic, fqe_train, quantile_risk
from .env import Goal, behavior_dataset, rollout, stack_transitions
from .finite import finite_kl, mc_tv_finite
from .gaussian import alpha_to_beta, equivalence_audit, gaussian_kl, klreg_compose, pinsker_tv_bound, poe_compose
from .mdp import cpi_diagnostic, poe_tabular, random_mdp, random_policy, softmax_prior, solve_values
from .methods import MethodSpec, compose_method, matched_klreg
from .policies import behavior_policy, fit_actor, make_prior
from .stats import classify_cell, paired_diff_ci, prob_improvement, summarize_cell

COMPOSITION_FAMILIES = ("Additive", "KL-Reg", "PoE")


def load_schema() -> dict:
    text = resources.files("poe_deploy").joinpath("schema.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return repr(x)
        if x == 0:
            return "0"
        return np.format_float_positional(x, precision=12, unique=False, fractional=False, trim="-")
    if x is None:
        return ""
    return str(x)


def write_csv(path: Path, name: str, rows: list[dict]) -> Path:
    header = list(load_schema()[name]["columns"])
    path = Path(path) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if set(r) != set(header):
                raise ValueError(f"{name}: row keys {sorted(r)} do not match the schema")
            w.writerow([fmt(r[c]) for c in header])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# fixture


@dataclass(frozen=True)
class Fixture:
    config: RunConfig
    data: dict
    actor: object
    critic: LinearCritic | None
    goals: dict


def goal_objects(cfg: RunConfig) -> dict:
    return {gid: Goal(w) for gid, w in cfg.goals.items()}


def build_fixture(cfg: RunConfig, with_critic: bool = True) -> Fixture:
    env = cfg.env
    behavior = behavior_policy(env, cfg.dataset.cruise_speed, cfg.dataset.behavior_noise)
    data = stack_transitions(behavior_dataset(env, behavior, cfg.dataset.n_transitions, cfg.dataset.seed))
    actor = fit_actor(env, data)
    critic = None
    if with_critic:
        f = cfg.fqe
        critic = fqe_train(
            data,
            actor,
            epochs=f.epochs,
            gamma=f.gamma,
            polyak_tau=f.polyak_tau,
            batch_size=f.batch_size,
            ridge=f.ridge,
            goal_sampler=f.goal_sampler,
            seed=f.seed,
        )
    return Fixture(cfg, data, actor, critic, goal_objects(cfg))


def prior_for(cfg: RunConfig, kind: str, goal: Goal, seed: int):
    return make_prior(kind, goal, seed, cfg.env, sigma=cfg.prior.noisy_sigma, settings=cfg.prior.settings)


def main_methods(cfg: RunConfig) -> list[MethodSpec]:
    """frozen, prior_only, additive, then PoE and matched KL-Reg at every grid point."""
    specs = [MethodSpec("frozen"), MethodSpec("prior_only"), MethodSpec("additive", cfg.additive_lambda)]
    specs += [MethodSpec("poe", a) for a in cfg.alpha_grid]
    specs += [matched_klreg(a, b) for a, b in zip(cfg.alpha_grid, cfg.beta_grid)]
    return specs


def awr_methods(cfg: RunConfig) -> list[MethodSpec]:
    return [MethodSpec("awr", b, clip=cfg.awr_clip) for b in cfg.awr_betas]


def matched_pairs(cfg: RunConfig) -> list[tuple[str, str]]:
    return [(MethodSpec("poe", a).method_id, matched_klreg(a, b).method_id) for a, b in zip(cfg.alpha_grid, cfg.beta_grid)]


def _spec_param(spec: MethodSpec):
    return None if spec.param is None else float(spec.param)


def _run_cell(job):
    cfg, actor, critic, spec, goal_id, goal, prior, seeds, episodes = job
    rule = compose_method(spec, actor, prior, critic, goal.weights)
    return rollout(cfg.env, rule, goal, seeds, episodes, spec.method_id, goal_id)


def run_cells(jobs: list, n_jobs: int = 1) -> list:
    """Run rollout cells, optionally in worker processes; output order follows `jobs`."""
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def episode_row(cfg: RunConfig, spec: MethodSpec, rec) -> dict:
    f, c, a = rec.raw_component_sums
    return {
        "env_id": cfg.env_id,
        "method_id": rec.method_id,
        "family": spec.family,
        "param": _spec_param(spec),
        "goal_id": rec.goal_id,
        "seed": rec.seed,
        "episode": rec.episode_index,
        "goal_weighted_return": rec.goal_weighted_return,
        "forward_sum": f,
        "control_sum": c,
        "alive_sum": a,
        "length": rec.length,
        "mean_kl_from_actor": rec.mean_kl_from_actor,
    }


# ---------------------------------------------------------------------------
# commands


def cmd_audit_equivalence(cfg: RunConfig, out, fixture: Fixture | None = None) -> tuple[list[dict], bool]:
    """PoE vs matched KL-Reg on dataset states under every goal's trained prior.

    Returns (rows, ok); ok is False when any residual exceeds the tolerance.
    """
    fixture = fixture or build_fixture(cfg, with_critic=False)
    states = fixture.data["state"][: cfg.audit.n_states]
    actor = fixture.actor(states)
    priors = [prior_for(cfg, "trained", g, cfg.prior.seed)(states) for g in fixture.goals.values()]
    rows, ok = [], True
    for a, b in zip(cfg.alpha_grid, cfg.beta_grid):
        recs = [equivalence_audit(actor, p, a) for p in priors]
        beta = alpha_to_beta(a)
        diffs = np.concatenate([np.abs(poe_compose(actor, p, a).mean - klreg_compose(actor, p, beta).mean).ravel() for p in priors])
        row = {
            "alpha": a,
            "beta": b,
            "beta_exact": beta,
            "n_states": states.shape[0],
            "n_goals": len(priors),
            "max_mean_abs_diff": max(r.max_mean_abs_diff for r in recs),
            "mean_mean_abs_diff": float(diffs.mean()),
            "max_variance_residual": max(r.variance_identity_residual for r in recs),
        }
        ok &= row["max_mean_abs_diff"] <= cfg.audit.tolerance and row["max_variance_residual"] <= cfg.audit.tolerance
        rows.append(row)
    write_csv(out, "equivalence_audit.csv", rows)
    return rows, bool(ok)


def cmd_rollout_package(cfg: RunConfig, out, n_jobs: int = 1, fixture: Fixture | None = None) -> dict:
    """Main package: 13 methods x goals x seeds x episodes, AWR separately."""
    fixture = fixture or build_fixture(cfg)
    seeds = list(cfg.seeds)
    specs = main_methods(cfg)
    awr = awr_methods(cfg)
    priors = {gid: prior_for(cfg, "trained", g, cfg.prior.seed) for gid, g in fixture.goals.items()}
    jobs = [
        (cfg, fixture.actor, fixture.critic, spec, gid, g, priors[gid], seeds, cfg.episodes_per_seed)
        for spec in specs + awr
        for gid, g in fixture.goals.items()
    ]
    results = run_cells(jobs, n_jobs)
    by_cell = {(j[3].method_id, j[4]): recs for j, recs in zip(jobs, results)}
    spec_of = {s.method_id: s for s in specs + awr}

    main_rows = [episode_row(cfg, j[3], r) for j, recs in zip(jobs, results) if j[3].kind != "awr" for r in recs]
    awr_rows = [episode_row(cfg, j[3], r) for j, recs in zip(jobs, results) if j[3].kind == "awr" for r in recs]
    write_csv(out, "episodes.csv", main_rows)
    write_csv(out, "awr_episodes.csv", awr_rows)

    bs = cfg.bootstrap
    per_seed, cells, summaries = [], [], {}
    for (mid, gid), recs in by_cell.items():
        for s in seeds:
            rs = [r for r in recs if r.seed == s]
            per_seed.append(
                {
                    "env_id": cfg.env_id,
                    "method_id": mid,
                    "goal_id": gid,
                    "seed": s,
                    "n_episodes": len(rs),
                    "mean_return": float(np.mean([r.goal_weighted_return for r in rs])),
                    "mean_kl_from_actor": float(np.mean([r.mean_kl_from_actor for r in rs])),
                }
            )
        summ = summarize_cell(
            mid, cfg.env_id, gid, [r.goal_weighted_return for r in recs], [r.seed for r in recs], bs.level, bs.resamples, bs.seed
        )
        summaries[mid, gid] = summ
        spec = spec_of[mid]
        rule = compose_method(spec, fixture.actor, priors[gid], fixture.critic, fixture.goals[gid].weights)
        risk = quantile_risk(rule, fixture.critic, fixture.data, fixture.goals[gid].weights, cfg.risk_percentiles)
        cells.append(
            {
                "env_id": cfg.env_id,
                "method_id": mid,
                "family": spec.family,
                "goal_id": gid,
                "n_seeds": summ.n_seeds,
                "n_episodes": len(recs),
                "mean_return": summ.mean,
                "ci_low": summ.ci_low,
                "ci_high": summ.ci_high,
                "mean_kl_from_actor": float(np.mean([r.mean_kl_from_actor for r in recs])),
                "cat_pct": risk.cat_pct,
                "con_pct": risk.con_pct,
                "rob": risk.rob,
            }
        )
    write_csv(out, "per_seed_summary.csv", per_seed)
    write_csv(out, "cell_summary.csv", cells)

    diag = []
    for gid in fixture.goals:
        frozen = summaries["frozen", gid]
        comp = [(summaries[s.method_id, gid].mean, s.method_id) for s in specs if s.family in COMPOSITION_FAMILIES]
        best_mean, best_id = max(comp, key=lambda t: (t[0], t[1]))
        v = classify_cell(frozen, best_mean)
        diag.append(
            {
                "env_id": cfg.env_id,
                "goal_id": gid,
                "frozen_mean": frozen.mean,
                "frozen_ci_low": frozen.ci_low,
                "frozen_ci_high": frozen.ci_high,
                "half_width": v.half_width,
                "best_method": best_id,
                "best_mean": best_mean,
                "best_gap": v.best_gap,
                "verdict": v.label,
            }
        )
    write_csv(out, "diagnostic_summary.csv", diag)

    def keyed(recs):
        return {(r.seed, r.episode_index): r.goal_weighted_return for r in recs}

    comparisons = []
    pairs = [("vs_frozen", s.method_id, "frozen") for s in specs + awr if s.kind != "frozen"]
    pairs += [("matched_pair", a, b) for a, b in matched_pairs(cfg)]
    for gid in fixture.goals:
        for kind, ma, mb in pairs:
            ra, rb = keyed(by_cell[ma, gid]), keyed(by_cell[mb, gid])
            mean, low, high = paired_diff_ci(ra, rb, bs.level, bs.resamples, bs.seed)
            comparisons.append(
                {
                    "env_id": cfg.env_id,
                    "goal_id": gid,
                    "comparison": kind,
                    "method_a": ma,
                    "method_b": mb,
                    "n_pairs": len(ra),
                    "mean_diff": mean,
                    "ci_low": low,
                    "ci_high": high,
                    "prob_improvement": prob_improvement(list(ra.values()), list(rb.values())),
                }
            )
    write_csv(out, "method_comparison.csv", comparisons)
    return {"episodes": main_rows, "awr_episodes": awr_rows, "cells": cells, "diagnostics": diag, "comparisons": comparisons}


def degradation_methods(cfg: RunConfig) -> list[MethodSpec]:
    d = cfg.degradation
    return [MethodSpec("frozen"), MethodSpec("prior_only"), MethodSpec("additive", d.additive_lambda), MethodSpec("poe", d.alpha)]


def cmd_prior_degradation(cfg: RunConfig, out, n_jobs: int = 1, fixture: Fixture | None = None) -> dict:
    """Every prior variant; each rollout seed also keys its own prior draw."""
    fixture = fixture or build_fixture(cfg, with_critic=False)
    d = cfg.degradation
    specs = degradation_methods(cfg)
    jobs, keys = [], []
    for variant in d.variants:
        for spec in specs:
            for gid, g in fixture.goals.items():
                for s in d.seeds:
                    prior = prior_for(cfg, variant, g, s)
                    jobs.append((cfg, fixture.actor, None, spec, gid, g, prior, [s], d.episodes_per_seed))
                    keys.append((variant, spec.method_id, gid))
    results = run_cells(jobs, n_jobs)
    cells: dict = {}
    for key, recs in zip(keys, results):
        cells.setdefault(key, []).extend(recs)

    ep_rows = [
        {
            "env_id": cfg.env_id,
            "variant": v,
            "method_id": mid,
            "goal_id": gid,
            "seed": r.seed,
            "episode": r.episode_index,
            "goal_weighted_return": r.goal_weighted_return,
            "length": r.length,
            "mean_kl_from_actor": r.mean_kl_from_actor,
        }
        for (v, mid, gid), recs in cells.items()
        for r in recs
    ]
    write_csv(out, "degradation_episodes.csv", ep_rows)

    bs = cfg.bootstrap
    cell_rows = []
    for (v, mid, gid), recs in cells.items():
        summ = summarize_cell(mid, cfg.env_id, gid, [r.goal_weighted_return for r in recs], [r.seed for r in recs], bs.level, bs.resamples, bs.seed)
        frozen = float(np.mean([r.goal_weighted_return for r in cells[v, "frozen", gid]]))
        cell_rows.append(
            {
                "env_id": cfg.env_id,
                "variant": v,
                "method_id": mid,
                "goal_id": gid,
                "n_episodes": len(recs),
                "mean_return": summ.mean,
                "ci_low": summ.ci_low,
                "ci_high": summ.ci_high,
                "frozen_mean": frozen,
                "gap": summ.mean - frozen,
            }
        )
    write_csv(out, "degradation_cells.csv", cell_rows)

    pivot = []
    for v in d.variants:
        for spec in specs:
            rows = [r for r in cell_rows if r["variant"] == v and r["method_id"] == spec.method_id]
            pivot.append(
                {
                    "env_id": cfg.env_id,
                    "variant": v,
                    "method_id": spec.method_id,
                    "mean_return": float(np.mean([r["mean_return"] for r in rows])),
                    "mean_gap": float(np.mean([r["gap"] for r in rows])),
                }
            )
    write_csv(out, "degradation_pivot.csv", pivot)
    return {"episodes": ep_rows, "cells": cell_rows, "pivot": pivot}


def cpi_rows_for_instance(cfg: RunConfig, gamma: float, instance: int) -> list[dict]:
    c = cfg.cpi
    rng = np.random.default_rng(np.random.SeedSequence([c.seed, int(round(gamma * 1e6)), instance]))
    mdp = random_mdp(rng, c.n_states, c.n_actions, gamma)
    actor = random_policy(rng, c.n_states, c.n_actions)
    rows = []
    for gid, g in cfg.goals.items():
        # goal-aware prior: softmax of the actor's Q under this goal
        prior = softmax_prior(solve_values(mdp, actor, g).Q, c.prior_temperature)
        for a in c.alphas:
            refined = poe_tabular(actor, prior, a)
            diag = cpi_diagnostic(mdp, actor, refined, g)
            mc_rng = np.random.default_rng(np.random.SeedSequence([c.seed, instance, len(rows), 0x7E]))
            delta_mc = max(mc_tv_finite(refined.row(s), actor.row(s), c.mc_samples, mc_rng) for s in range(c.n_states))
            delta_pinsker = max(float(pinsker_tv_bound(finite_kl(refined.row(s), actor.row(s)))) for s in range(c.n_states))
            rows.append(
                {
                    "gamma": gamma,
                    "instance": instance,
                    "goal_id": gid,
                    "alpha": a,
                    "lhs": diag.lhs,
                    "gain": diag.gain_term,
                    "eps_A": diag.eps_A,
                    "delta_exact": diag.delta_pi,
                    "delta_mc": delta_mc,
                    "delta_pinsker": delta_pinsker,
                    "penalty_coeff": diag.penalty_coeff,
                    "rhs": diag.rhs,
                    "rhs_unit_proxy": diag.rhs_unit_proxy,
                    "bound_holds": diag.lhs >= diag.rhs,
                    "looseness": (diag.lhs - diag.rhs) / max(abs(diag.lhs), 1e-12),
                }
            )
    return rows


def cmd_cpi_diagnostic(cfg: RunConfig, out) -> list[dict]:
    rows = [r for gamma in cfg.cpi.gammas for i in range(cfg.cpi.n_instances) for r in cpi_rows_for_instance(cfg, gamma, i)]
    write_csv(out, "cpi_diagnostic.csv", rows)
    return rows


def _kl_over_states(rule, actor, states: np.ndarray) -> float:
    return float(np.mean(gaussian_kl(rule.distribution(states), actor(states))))


def alpha_grid_results(cfg: RunConfig, fixture: Fixture, gid: str) -> list[asel.AlphaGridResult]:
    st = cfg.alpha_study
    g = fixture.goals[gid]
    prior = prior_for(cfg, "trained", g, cfg.prior.seed)
    out = []
    for a in st.alphas:
        rule = compose_method(MethodSpec("poe", a), fixture.actor, prior)
        val, val_states = rollout(cfg.env, rule, g, st.val_seeds, st.episodes_per_seed, return_states=True)
        test, test_states = rollout(cfg.env, rule, g, st.test_seeds, st.episodes_per_seed, return_states=True)
        out.append(
            asel.AlphaGridResult(
                alpha=a,
                val_return=float(np.mean([r.goal_weighted_return for r in val])),
                test_return=float(np.mean([r.goal_weighted_return for r in test])),
                val_kl=_kl_over_states(rule, fixture.actor, val_states),
                test_kl=_kl_over_states(rule, fixture.actor, test_states),
            )
        )
    return out


def cmd_alpha_study(cfg: RunConfig, out, fixture: Fixture | None = None) -> dict:
    fixture = fixture or build_fixture(cfg, with_critic=False)
    grid_rows, study_rows = [], []
    for gid in fixture.goals:
        grid = alpha_grid_results(cfg, fixture, gid)
        for r in grid:
            grid_rows.append({"env_id": cfg.env_id, "goal_id": gid, "alpha": r.alpha, "val_return": r.val_return, "test_return": r.test_return, "val_kl": r.val_kl, "test_kl": r.test_kl})
        oracle = asel.row_for(asel.oracle_select(grid), grid)
        picks = [("kl_budget", k, asel.kl_budget_select(grid, k)) for k in cfg.alpha_study.kappas]
        picks.append(("val_best", None, asel.val_best_select(grid)))
        for rule, kappa, alpha in picks:
            sel = asel.row_for(alpha, grid)
            study_rows.append(
                {
                    "env_id": cfg.env_id,
                    "goal_id": gid,
                    "rule": rule,
                    "kappa": kappa,
                    "selected_alpha": alpha,
                    "oracle_alpha": oracle.alpha,
                    "test_return": sel.test_return,
                    "oracle_return": oracle.test_return,
                    "selection_loss": asel.selection_loss(alpha, grid),
                    "test_kl": sel.test_kl,
                }
            )
    write_csv(out, "alpha_grid.csv", grid_rows)
    write_csv(out, "alpha_study.csv", study_rows)
    return {"grid": grid_rows, "study": study_rows}


def write_config_echo(cfg: RunConfig, out) -> Path:
    path = Path(out) / "config.yaml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path
