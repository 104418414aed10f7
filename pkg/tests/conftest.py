import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture(scope="session")
def package_dir(tmp_path_factory):
    """Full default evidence package, built once per session."""
    from poe_deploy import experiments as ex
    from poe_deploy.config import RunConfig
    from poe_deploy.manifest import write_manifest

    os.environ.setdefault("SOURCE_DATE_EPOCH", "1700000000")
    cfg = RunConfig()
    out = tmp_path_factory.mktemp("package")
    ex.write_config_echo(cfg, out)
    timings = {}
    start = time.perf_counter()
    fixture = ex.build_fixture(cfg)
    timings["fixture"] = time.perf_counter() - start
    results = {"fixture": fixture, "timings": timings}
    steps = {
        "audit": lambda: ex.cmd_audit_equivalence(cfg, out, fixture),
        "rollout": lambda: ex.cmd_rollout_package(cfg, out, 1, fixture),
        "degradation": lambda: ex.cmd_prior_degradation(cfg, out, 1, fixture),
        "cpi": lambda: ex.cmd_cpi_diagnostic(cfg, out),
        "alpha": lambda: ex.cmd_alpha_study(cfg, out, fixture),
    }
    for name, step in steps.items():
        t0 = time.perf_counter()
        results[name] = step()
        timings[name] = time.perf_counter() - t0
    write_manifest(out, cfg.to_dict(), cfg.seeds)
    timings["total"] = time.perf_counter() - start
    return out, cfg, results


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(REPORT):
        ok, detail = REPORT[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
