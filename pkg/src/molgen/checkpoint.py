"""Checkpoint files shared by both models.

A checkpoint is a single ``.npz`` archive:

* ``__meta__`` - JSON text with ``format`` ("molgen-checkpoint"), ``version`` (1),
  ``model`` ("molgan" | "nflow"), ``config``, ``seed``, ``step`` and ``rng`` (the
  bit-generator states of every random stream), plus model-specific keys.
* one float64 array per parameter, keyed ``<group>/<parameter name>`` (for example
  ``generator/hidden.0.weight``), and optimizer moments under ``<group>_adam/...``.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT = "molgen-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _to_json(obj):
    if isinstance(obj, dict):
        return {k: _to_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _from_json(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _from_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_from_json(v) for v in obj]
    return obj


def config_digest(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save(path, model: str, meta: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format": FORMAT, "version": VERSION, "model": model, **meta}
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload["__meta__"] = np.array(json.dumps(_to_json(header)))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        npz = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as exc:
        raise CheckpointError(f"{path} is not a molgen checkpoint ({exc})") from None
    if not hasattr(npz, "files"):
        raise CheckpointError(f"{path} is a bare array, not a molgen checkpoint")
    with npz:
        if "__meta__" not in npz.files:
            raise CheckpointError(f"{path} is not a molgen checkpoint")
        try:
            meta = _from_json(json.loads(str(npz["__meta__"])))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt metadata ({exc})") from None
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {meta.get('version')!r}")
    return meta, arrays


def group(arrays: dict, prefix: str) -> dict[str, np.ndarray]:
    p = prefix + "/"
    return {k[len(p) :]: v for k, v in arrays.items() if k.startswith(p)}


def prefixed(prefix: str, state: dict) -> dict:
    return {f"{prefix}/{k}": v for k, v in state.items()}
