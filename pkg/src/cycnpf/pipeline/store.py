"""Content-addressed artifact directories and the per-run manifest."""

from __future__ import annotations

import hashlib
import json
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path

COMPLETE = "_complete.json"


def tree_hash(path) -> str:
    """SHA-256 over every file below ``path`` (relative name and bytes), sorted."""
    path = Path(path)
    h = hashlib.sha256()
    files = [path] if path.is_file() else sorted(p for p in path.rglob("*") if p.is_file() and p.name != COMPLETE)
    for f in files:
        h.update(str(f.relative_to(path) if f != path else f.name).encode())
        h.update(b"\0")
        h.update(f.read_bytes())
        h.update(b"\0")
    return h.hexdigest()


def is_complete(directory) -> bool:
    return (Path(directory) / COMPLETE).is_file()


def completion(directory) -> dict:
    return json.loads((Path(directory) / COMPLETE).read_text())


@contextmanager
def building(directory):
    """Build into a sibling temp dir, then swap it into place with a completion record.

    Yields the temp path. On error the temp dir is removed and any previous
    content is left untouched.
    """
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=directory.name + ".", dir=directory.parent))
    try:
        yield tmp
        digest = tree_hash(tmp)
        (tmp / COMPLETE).write_text(json.dumps({"content_hash": digest}))
        if directory.exists():
            shutil.rmtree(directory)
        tmp.rename(directory)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)


class StageOrderError(RuntimeError):
    pass


class RunManifest:
    """Stage completion records for one (config, seed) run, stored as JSON."""

    def __init__(self, path, config_hash: str, seed: int, config: dict | None = None):
        self.path = Path(path)
        self.data = {"config_hash": config_hash, "seed": seed, "config": config or {}, "stages": {}}
        if self.path.exists():
            stored = json.loads(self.path.read_text())
            if stored.get("config_hash") != config_hash:
                raise ValueError(f"{self.path} belongs to config {stored.get('config_hash')}, not {config_hash}")
            self.data = stored

    @property
    def stages(self) -> dict:
        return self.data["stages"]

    def is_done(self, stage: str) -> bool:
        return self.stages.get(stage, {}).get("status") == "complete"

    def require(self, stage: str, prerequisites):
        missing = [p for p in prerequisites if not self.is_done(p)]
        if missing:
            raise StageOrderError(f"stage {stage!r} needs completed stage(s): {', '.join(missing)}")

    def record(self, stage: str, artifacts: dict, content_hash: str, stats: dict | None = None):
        self.stages[stage] = {
            "status": "complete",
            "artifacts": {k: str(v) for k, v in artifacts.items()},
            "content_hash": content_hash,
            "stats": stats or {},
        }
        self.save()

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True))
