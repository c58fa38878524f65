"""Checkpoint files: a JSON manifest plus a float32 little-endian blob.

``<stem>.json`` holds the model kind, hyperparameters, format version and the
ordered list of ``(name, shape)``; ``<stem>.bin`` concatenates the parameters
in manifest order.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def _paths(stem):
    stem = Path(stem)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_checkpoint(stem, kind: str, params, hyper: dict | None = None, extra: dict | None = None):
    """``params`` maps names to arrays (or Tensors); order is preserved."""
    manifest_path, blob_path = _paths(stem)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    with open(blob_path, "wb") as fh:
        for name, value in params.items():
            arr = np.asarray(getattr(value, "data", value))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
            entries.append({"name": name, "shape": list(arr.shape)})
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "hyperparameters": hyper or {},
        "parameters": entries,
        "extra": extra or {},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path


def load_checkpoint(stem, kind: str | None = None):
    """Return ``(manifest, OrderedDict name -> float32 array)``."""
    manifest_path, blob_path = _paths(stem)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{manifest_path}: unsupported format {manifest.get('format_version')}")
    if kind is not None and manifest["kind"] != kind:
        raise ValueError(f"{manifest_path}: expected kind {kind!r}, found {manifest['kind']!r}")
    raw = blob_path.read_bytes()
    params = OrderedDict()
    offset = 0
    for entry in manifest["parameters"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(entry["shape"])
        params[entry["name"]] = arr.astype(np.float32)
        offset += 4 * count
    if offset != len(raw):
        raise ValueError(f"{blob_path}: size does not match manifest")
    return manifest, params
