import shutil
import subprocess
import sys

import pytest

from poe_deploy.cli import main
from poe_deploy.experiments import read_csv
from poe_deploy.manifest import MANIFEST_NAME


@pytest.fixture()
def package_copy(package_dir, tmp_path):
    dst = tmp_path / "pkg"
    shutil.copytree(package_dir[0], dst)
    return dst


def test_validate_passes_on_fresh_package(package_copy, capsys):
    assert main(["validate", "--out", str(package_copy)]) == 0
    assert capsys.readouterr().out.strip().endswith("STATUS: PASS")


def test_any_single_byte_mutation_fails(package_copy, capsys):
    for path in sorted(package_copy.iterdir()):
        original = path.read_bytes()
        mutated = bytearray(original)
        mutated[len(mutated) // 2] ^= 0x01
        path.write_bytes(bytes(mutated))
        assert main(["validate", "--out", str(package_copy)]) == 1, path.name
        assert "STATUS: FAIL" in capsys.readouterr().out
        path.write_bytes(original)
    assert main(["validate", "--out", str(package_copy)]) == 0


def test_validator_catches_broken_matched_pair(package_copy, capsys):
    # a consistent manifest does not hide a content problem
    path = package_copy / "episodes.csv"
    rows = path.read_text().splitlines()
    header = rows[0].split(",")
    col = header.index("goal_weighted_return")
    for i, line in enumerate(rows[1:], start=1):
        parts = line.split(",")
        if parts[header.index("method_id")] == "klreg_1.000":
            parts[col] = str(float(parts[col]) + 1.0)
            rows[i] = ",".join(parts)
            break
    path.write_text("\n".join(rows) + "\n")
    assert main(["manifest", "--out", str(package_copy)]) == 0
    assert main(["validate", "--out", str(package_copy)]) == 1
    out = capsys.readouterr().out
    assert "poe_0.5 and klreg_1.000 differ" in out


def test_validator_catches_missing_coverage(package_copy, capsys):
    path = package_copy / "episodes.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    main(["manifest", "--out", str(package_copy)])
    assert main(["validate", "--out", str(package_copy)]) == 1
    assert "expected episodes missing" in capsys.readouterr().out


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("beta_grid: [0.5, 0.429, 1.0, 2.333, 9.0]\n")
    assert main(["audit-equivalence", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["rollout", "--seed-override", "0,x", "--out", str(tmp_path / "o")]) == 2
    assert main(["rollout", "--seed-override", "1,1", "--out", str(tmp_path / "o")]) == 2
    assert main(["rollout", "--jobs", "0", "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_validate_without_package(tmp_path):
    assert main(["validate", "--out", str(tmp_path)]) == 1


def test_small_cpi_run_and_manifest(tmp_path):
    cfg = tmp_path / "small.yaml"
    cfg.write_text("cpi:\n  n_instances: 2\n  mc_samples: 256\n")
    out = tmp_path / "o"
    assert main(["cpi-diagnostic", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "cpi_diagnostic.csv")
    assert len(rows) == 2 * 2 * 3 * 5
    assert main(["manifest", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / MANIFEST_NAME).is_file()
    assert main(["validate", "--out", str(out)]) == 0


def test_seed_override_reaches_rollouts(tmp_path):
    out = tmp_path / "o"
    cfg = tmp_path / "c.yaml"
    cfg.write_text("episodes_per_seed: 1\ndataset:\n  n_transitions: 2000\nfqe:\n  epochs: 20\n")
    assert main(["rollout", "--config", str(cfg), "--seed-override", "7,9", "--out", str(out)]) == 0
    assert {r["seed"] for r in read_csv(out / "episodes.csv")} == {"7", "9"}
    assert main(["manifest", "--config", str(cfg), "--seed-override", "7,9", "--out", str(out)]) == 0
    assert main(["validate", "--out", str(out)]) == 0


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "poe_deploy.cli", "validate", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 1 and "STATUS: FAIL" in r.stdout
