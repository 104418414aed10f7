import json
import shutil

import pytest

from poe_deploy.manifest import MANIFEST_NAME, build_manifest, sha256_file, verify_manifest, write_manifest


@pytest.fixture()
def package_copy(package_dir, tmp_path):
    dst = tmp_path / "pkg"
    shutil.copytree(package_dir[0], dst)
    return dst


def test_sha256_of_known_bytes(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"abc")
    assert sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_fresh_package_verifies(package_copy):
    assert verify_manifest(package_copy) == []


def test_manifest_lists_every_file_once(package_copy):
    body = json.loads((package_copy / MANIFEST_NAME).read_text())
    on_disk = sorted(p.name for p in package_copy.iterdir() if p.name != MANIFEST_NAME)
    assert sorted(body["files"]) == on_disk
    assert all(len(h) == 64 for h in body["files"].values())
    assert body["seeds"] == [0, 1, 2, 3, 4]


def test_flipped_byte_is_named(package_copy):
    p = package_copy / "cell_summary.csv"
    data = bytearray(p.read_bytes())
    data[100] ^= 1
    p.write_bytes(bytes(data))
    assert verify_manifest(package_copy) == ["cell_summary.csv: hash mismatch"]


def test_missing_and_extra_files(package_copy):
    (package_copy / "alpha_grid.csv").unlink()
    (package_copy / "notes.txt").write_text("hi")
    problems = verify_manifest(package_copy)
    assert "alpha_grid.csv: listed but missing" in problems
    assert "notes.txt: present but not listed" in problems


def test_manifest_edits_are_caught(package_copy):
    path = package_copy / MANIFEST_NAME
    body = json.loads(path.read_text())
    body["seeds"] = [0]
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
    assert any("self digest" in p for p in verify_manifest(package_copy))
    path.unlink()
    assert verify_manifest(package_copy) == [f"missing {MANIFEST_NAME}"]


def test_timestamp_pinned(package_copy, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert build_manifest(package_copy, {}, [0])["timestamp"] == "1970-01-01T00:00:00Z"
    a = write_manifest(package_copy, {}, [0]).read_bytes()
    assert write_manifest(package_copy, {}, [0]).read_bytes() == a


def test_empty_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        build_manifest(tmp_path, {}, [0])
