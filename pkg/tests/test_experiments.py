import numpy as np
import pytest

from poe_deploy import experiments as ex
from poe_deploy.config import RunConfig
from poe_deploy.gaussian import alpha_to_beta, gaussian_kl, klreg_compose, poe_compose
from poe_deploy.validate import MATCHED_FIELDS


def test_fmt_keeps_nine_significant_digits():
    assert ex.fmt(1 / 3) == "0.333333333333"
    assert ex.fmt(19800.0) == "19800"
    assert ex.fmt(True) == "1" and ex.fmt(None) == "" and ex.fmt(0.0) == "0"
    s = ex.fmt(1.234567891234e-7)
    assert float(s) == pytest.approx(1.234567891234e-7, rel=1e-11) and "e" not in s


def test_write_csv_rejects_unknown_columns(tmp_path):
    with pytest.raises(ValueError):
        ex.write_csv(tmp_path, "alpha_grid.csv", [{"alpha": 0.1}])


def test_method_lists():
    cfg = RunConfig()
    ids = [s.method_id for s in ex.main_methods(cfg)]
    assert len(ids) == 13 and len(set(ids)) == 13
    assert ex.matched_pairs(cfg)[2] == ("poe_0.5", "klreg_1.000")


def test_row_counts(package_dir):
    out, cfg, res = package_dir
    assert len(res["rollout"]["episodes"]) == 13 * 3 * 5 * 5 == 975
    assert len(res["rollout"]["awr_episodes"]) == 3 * 3 * 5 * 5
    assert len(res["degradation"]["episodes"]) == 4 * 4 * 3 * 3 * 3 == 432
    assert len(res["alpha"]["study"]) == 3 * (len(cfg.alpha_study.kappas) + 1)
    assert len(res["audit"][0]) == 5
    assert len(ex.read_csv(out / "episodes.csv")) == 975


def test_headers_follow_schema(package_dir):
    out, _, _ = package_dir
    schema = ex.load_schema()
    for path in out.glob("*.csv"):
        header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
        assert header == list(schema[path.name]["columns"]), path.name


def test_audit_residuals(package_dir):
    rows, ok = package_dir[2]["audit"]
    assert ok
    assert all(r["max_mean_abs_diff"] <= 1e-6 and r["max_variance_residual"] <= 1e-6 for r in rows)


def test_matched_pairs_bit_identical(package_dir):
    out, cfg, res = package_dir
    rows = ex.read_csv(out / "episodes.csv")
    index = {(r["method_id"], r["goal_id"], r["seed"], r["episode"]): r for r in rows}
    for a, b in ex.matched_pairs(cfg):
        for key, ra in index.items():
            if key[0] == a:
                rb = index[(b,) + key[1:]]
                assert all(ra[f] == rb[f] for f in MATCHED_FIELDS)
    matched = [c for c in res["rollout"]["comparisons"] if c["comparison"] == "matched_pair"]
    assert len(matched) == 15
    assert all(c["mean_diff"] == c["ci_low"] == c["ci_high"] == 0 for c in matched)


def test_frozen_episodes_have_zero_kl(package_dir):
    eps = package_dir[2]["rollout"]["episodes"]
    assert all(r["mean_kl_from_actor"] == 0 for r in eps if r["method_id"] == "frozen")


def test_verdicts_cover_every_goal(package_dir):
    diag = package_dir[2]["rollout"]["diagnostics"]
    assert sorted(d["goal_id"] for d in diag) == ["G1", "G2", "G3"]
    assert all(d["verdict"] in ("Help", "Frozen", "Hurt") for d in diag)


def test_risk_rates_ordered(package_dir):
    for c in package_dir[2]["rollout"]["cells"]:
        assert 0 <= c["con_pct"] <= c["cat_pct"] <= 1
        assert c["rob"] == pytest.approx(1 - c["cat_pct"] - 0.5 * c["con_pct"])


def test_kl_covariance_law_on_fixture_states(package_dir):
    # KL-Reg keeps a (1 + beta) tighter covariance than PoE at the same mean,
    # so its KL from the actor is never smaller
    _, cfg, res = package_dir
    fx = res["fixture"]
    states = fx.data["state"][:2000]
    actor = fx.actor(states)
    for g in fx.goals.values():
        prior = ex.prior_for(cfg, "trained", g, cfg.prior.seed)(states)
        for a in cfg.alpha_grid:
            kl_poe = gaussian_kl(poe_compose(actor, prior, a), actor)
            kl_reg = gaussian_kl(klreg_compose(actor, prior, alpha_to_beta(a)), actor)
            assert np.all(kl_reg >= kl_poe - 1e-12)


def pivot(res):
    return {(r["variant"], r["method_id"]): r for r in res["degradation"]["pivot"]}


def test_degradation_monotone_for_prior_only(package_dir):
    p = pivot(package_dir[2])
    means = [p[v, "prior_only"]["mean_return"] for v in ("trained", "undertrained", "noisy", "random")]
    assert means == sorted(means, reverse=True)


def test_degradation_frozen_gap_zero_and_random_collapse(package_dir):
    p = pivot(package_dir[2])
    assert all(r["mean_gap"] == 0 for (v, m), r in p.items() if m == "frozen")
    gaps = {v: p[v, "prior_only"]["mean_gap"] for v in ("trained", "undertrained", "noisy", "random")}
    assert min(gaps, key=gaps.get) == "random"


def test_random_prior_anchoring(package_dir):
    p = pivot(package_dir[2])
    poe = abs(p["random", "poe_0.5"]["mean_gap"])
    assert poe < abs(p["random", "additive_0.5"]["mean_gap"])
    assert poe < abs(p["random", "prior_only"]["mean_gap"])


def test_cpi_rows(package_dir):
    rows = package_dir[2]["cpi"]
    assert len(rows) == 2 * 20 * 3 * 5
    assert all(r["bound_holds"] for r in rows)
    assert all(r["delta_pinsker"] >= r["delta_mc"] - 1e-12 for r in rows)
    assert {r["penalty_coeff"] for r in rows if r["gamma"] == 0.99} == {19800.0}
    assert any(r["rhs"] < r["lhs"] - 10 * abs(r["lhs"]) for r in rows)


def test_alpha_study_layout(package_dir):
    _, cfg, res = package_dir
    study = res["alpha"]["study"]
    for gid in cfg.goals:
        rows = [r for r in study if r["goal_id"] == gid]
        assert [r["rule"] for r in rows] == ["kl_budget"] * 4 + ["val_best"]
        losses = [r["selection_loss"] for r in rows[:4]]
        assert all(x >= 0 for x in losses)
        assert losses == sorted(losses, reverse=True) and losses[-1] == 0
        assert rows[3]["selected_alpha"] == rows[4]["selected_alpha"]


def test_rerun_is_byte_identical(package_dir, tmp_path):
    out, cfg, res = package_dir
    ex.cmd_audit_equivalence(cfg, tmp_path, res["fixture"])
    ex.cmd_cpi_diagnostic(cfg, tmp_path)
    for name in ("equivalence_audit.csv", "cpi_diagnostic.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_parallel_cells_match_serial():
    cfg = RunConfig(seeds=(0, 1), episodes_per_seed=2)
    fx = ex.build_fixture(cfg, with_critic=False)
    g = fx.goals["G2"]
    prior = ex.prior_for(cfg, "trained", g, 0)
    jobs = [(cfg, fx.actor, None, s, "G2", g, prior, [0, 1], 2) for s in ex.main_methods(cfg)[:4]]
    assert ex.run_cells(jobs, 1) == ex.run_cells(jobs, 2)
