"""Validity / uniqueness / novelty of generated molecules.

Conventions:

* valid = passes the valence table, is connected and has at least one atom;
* uniqueness and novelty use the number of valid molecules as denominator;
* novelty counts every valid molecule (duplicates included) whose canonical
  string is absent from the training set;
* with no valid molecules, uniqueness and novelty are reported as 0 and the
  report is flagged.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from molgen.chem import Molecule, canonicalize, check_valence, is_connected

CONVENTIONS = (
    "valid = valence-correct and connected and non-empty; "
    "uniqueness, novelty denominators = valid molecules; "
    "novelty counted per occurrence"
)


def is_valid(m: Molecule | None) -> bool:
    return m is not None and m.num_atoms >= 1 and check_valence(m) and is_connected(m)


def _valid_canon(mols: Iterable[Molecule | None]) -> list[str]:
    return [canonicalize(m) for m in mols if is_valid(m)]


def validity(mols: Sequence[Molecule | None]) -> float:
    if not mols:
        return 0.0
    return 100.0 * sum(is_valid(m) for m in mols) / len(mols)


def uniqueness(mols: Sequence[Molecule | None]) -> float:
    canon = _valid_canon(mols)
    if not canon:
        return 0.0
    return 100.0 * len(set(canon)) / len(canon)


def novelty(mols: Sequence[Molecule | None], training_canon: set[str]) -> float:
    canon = _valid_canon(mols)
    if not canon:
        return 0.0
    return 100.0 * sum(c not in training_canon for c in canon) / len(canon)


@dataclass
class MoleculeRecord:
    canonical: str | None
    valid: bool
    novel: bool


@dataclass
class GenerationReport:
    n_generated: int
    n_valid: int
    validity: float
    uniqueness: float
    novelty: float
    seed: int | None = None
    no_valid_molecules: bool = False
    records: list[MoleculeRecord] = field(default_factory=list)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("records")
        return d


def evaluate(
    mols: Sequence[Molecule | None], training_canon: set[str] | None = None, seed: int | None = None
) -> GenerationReport:
    training_canon = training_canon or set()
    records = []
    for m in mols:
        if is_valid(m):
            c = canonicalize(m)
            records.append(MoleculeRecord(c, True, c not in training_canon))
        else:
            records.append(MoleculeRecord(None, False, False))
    valid = [r for r in records if r.valid]
    n_valid = len(valid)
    return GenerationReport(
        n_generated=len(records),
        n_valid=n_valid,
        validity=100.0 * n_valid / len(records) if records else 0.0,
        uniqueness=100.0 * len({r.canonical for r in valid}) / n_valid if n_valid else 0.0,
        novelty=100.0 * sum(r.novel for r in valid) / n_valid if n_valid else 0.0,
        seed=seed,
        no_valid_molecules=n_valid == 0,
        records=records,
    )


REPORT_KEYS = ("seed", "n_generated", "n_valid", "validity", "uniqueness", "novelty", "no_valid_molecules")


def mean_row(reports: Sequence[GenerationReport]) -> dict:
    row = {"seed": "mean"}
    for k in REPORT_KEYS[1:]:
        vals = [getattr(r, k) for r in reports]
        row[k] = any(vals) if k == "no_valid_molecules" else sum(vals) / len(vals)
    return row


def report_rows(reports: Sequence[GenerationReport]) -> list[dict]:
    rows = [{k: getattr(r, k) for k in REPORT_KEYS} for r in reports]
    if len(reports) > 1:
        rows.append(mean_row(reports))
    return rows


def format_text(rows: list[dict], header: dict | None = None) -> str:
    lines = [f"# {k}: {v}" for k, v in (header or {}).items()]
    lines.append(f"# conventions: {CONVENTIONS}")
    lines.append(f"{'seed':>6} {'n_gen':>7} {'n_valid':>7} {'Val':>7} {'Uni':>7} {'Nov':>7}")
    for r in rows:
        lines.append(
            f"{str(r['seed']):>6} {r['n_generated']:>7.0f} {r['n_valid']:>7.0f} "
            f"{r['validity']:7.2f} {r['uniqueness']:7.2f} {r['novelty']:7.2f}"
            + ("  (no valid molecules)" if r["no_valid_molecules"] is True else "")
        )
    return "\n".join(lines) + "\n"


def format_json(rows: list[dict], header: dict | None = None) -> str:
    return json.dumps({"header": {**(header or {}), "conventions": CONVENTIONS}, "rows": rows}, indent=2)
