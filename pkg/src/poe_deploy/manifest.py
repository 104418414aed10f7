"""Hashed manifest of an output directory, and its verification."""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"
TOOL = "poe-deploy"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp so reruns are byte-identical
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def _listing(out: Path) -> list[str]:
    return sorted(p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file() and p.name != MANIFEST_NAME)


def _canonical(body: dict) -> str:
    return json.dumps(body, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def build_manifest(out, config: dict, seeds) -> dict:
    out = Path(out)
    files = {name: sha256_file(out / name) for name in _listing(out)}
    if not files:
        raise FileNotFoundError(f"no files to record in {out}")
    body = {
        "tool": TOOL,
        "version": __version__,
        "timestamp": _timestamp(),
        "seeds": [int(s) for s in seeds],
        "config": config,
        "files": files,
    }
    body["self_digest"] = hashlib.sha256(_canonical(body).encode()).hexdigest()
    return body


def write_manifest(out, config: dict, seeds) -> Path:
    body = build_manifest(out, config, seeds)
    path = Path(out) / MANIFEST_NAME
    path.write_text(_canonical(body), encoding="utf-8")
    return path


def verify_manifest(out) -> list[str]:
    """Problems found in `out`; an empty list means the package is intact."""
    out = Path(out)
    path = out / MANIFEST_NAME
    if not path.is_file():
        return [f"missing {MANIFEST_NAME}"]
    raw = path.read_bytes()
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        return [f"{MANIFEST_NAME}: unreadable ({e})"]
    if not isinstance(body, dict) or "files" not in body or "self_digest" not in body:
        return [f"{MANIFEST_NAME}: malformed"]
    problems = []
    claimed = body.pop("self_digest")
    if hashlib.sha256(_canonical(body).encode()).hexdigest() != claimed:
        problems.append(f"{MANIFEST_NAME}: self digest mismatch")
    body["self_digest"] = claimed
    if _canonical(body).encode() != raw:
        problems.append(f"{MANIFEST_NAME}: not in canonical form")
    files = body["files"]
    on_disk = set(_listing(out))
    for name in sorted(set(files) - on_disk):
        problems.append(f"{name}: listed but missing")
    for name in sorted(on_disk - set(files)):
        problems.append(f"{name}: present but not listed")
    for name in sorted(set(files) & on_disk):
        if sha256_file(out / name) != files[name]:
            problems.append(f"{name}: hash mismatch")
    return problems
