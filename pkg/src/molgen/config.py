"""Run configuration files (JSON) for the command line.

Top-level keys::

    model              "molgan" | "nflow"                       (required)
    dataset            {"path": str, "column": str|null,
                        "filter": bool, "subsample": int|null}  (path required)
    seed               int                                      (default 0)
    epochs             int >= 1 (default 30 for molgan, 100 for nflow); the
                       nflow section's own "epochs" is ignored in favour of this
    steps              int|null - MolGAN only, overrides epochs (default null)
    checkpoint_interval int >= 0, MolGAN steps between checkpoints (default 0 = off)
    output_dir         str                                      (default "runs/<model>")
    molgan             MolganConfig fields (see molgen.molgan.config)
    nflow              FlowConfig fields (see molgen.nflow.model)

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from molgen.checkpoint import config_digest
from molgen.molgan.config import MolganConfig
from molgen.nflow.model import FlowConfig


class ConfigError(ValueError):
    pass


TOP_KEYS = {"model", "dataset", "seed", "epochs", "steps", "checkpoint_interval", "output_dir", "molgan", "nflow"}
DATASET_KEYS = {"path", "column", "filter", "subsample"}


@dataclass
class DatasetConfig:
    path: str
    column: str | None = None
    filter: bool = True
    subsample: int | None = None


@dataclass
class RunConfig:
    model: str
    dataset: DatasetConfig
    seed: int = 0
    epochs: int = 30
    steps: int | None = None
    checkpoint_interval: int = 0
    output_dir: str = ""
    molgan: MolganConfig = field(default_factory=MolganConfig)
    nflow: FlowConfig = field(default_factory=FlowConfig)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "dataset": dataclasses.asdict(self.dataset),
            "seed": self.seed,
            "epochs": self.epochs,
            "steps": self.steps,
            "checkpoint_interval": self.checkpoint_interval,
            "output_dir": self.output_dir,
            "molgan": self.molgan.to_dict(),
            "nflow": self.nflow.to_dict(),
        }

    def digest(self) -> str:
        """Identifies the experiment; where its files go is not part of it."""
        d = self.to_dict()
        d.pop("output_dir")
        return config_digest(d)


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"line {line}: " if line else ""


def _check_keys(text: str, section: str, given: dict, allowed: set[str]) -> None:
    for k in given:
        if k not in allowed:
            raise ConfigError(f"{_where(text, k)}unknown key {section}{k!r}")


def _build(text: str, section: str, cls, values: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(text, f"{section}.", values, names)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        key = next((n for n in sorted(names, key=len, reverse=True) if n in msg and n in values), None)
        loc = _where(text, key) if key else _where(text, section)
        field_name = f"{section}.{key}" if key else section
        raise ConfigError(f"{loc}invalid {field_name}: {msg}") from None


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: malformed JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("line 1: config must be a JSON object")
    _check_keys(text, "", raw, TOP_KEYS)
    model = raw.get("model")
    if model not in ("molgan", "nflow"):
        raise ConfigError(f"{_where(text, 'model')}invalid model: must be 'molgan' or 'nflow', got {model!r}")
    ds = raw.get("dataset")
    if not isinstance(ds, dict) or "path" not in ds:
        raise ConfigError(f"{_where(text, 'dataset')}invalid dataset: object with a 'path' key required")
    dataset = _build(text, "dataset", DatasetConfig, ds)
    if base_dir is not None and not Path(dataset.path).is_absolute():
        dataset.path = str((base_dir / dataset.path).resolve())

    def integer(key, default, minimum, allow_none=False):
        v = raw.get(key, default)
        if v is None and allow_none:
            return None
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            raise ConfigError(f"{_where(text, key)}invalid {key}: expected integer >= {minimum}, got {v!r}")
        return v

    seed = integer("seed", 0, 0)
    epochs = integer("epochs", 30 if model == "molgan" else 100, 1)
    steps = integer("steps", None, 1, allow_none=True)
    interval = integer("checkpoint_interval", 0, 0)
    mg = dict(raw.get("molgan") or {})
    if "checkpoint_interval" not in mg:
        mg["checkpoint_interval"] = interval
    molgan = _build(text, "molgan", MolganConfig, mg)
    nflow = _build(text, "nflow", FlowConfig, dict(raw.get("nflow") or {}))
    out = raw.get("output_dir") or f"runs/{model}"
    if base_dir is not None and not Path(out).is_absolute():
        out = str((base_dir / out).resolve())
    return RunConfig(model, dataset, seed, epochs, steps, interval, out, molgan, nflow)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)
