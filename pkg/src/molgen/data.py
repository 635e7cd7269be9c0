"""Dataset loading, filtering and subsampling.

Accepted inputs are plain text (one SMILES per line, optional ``#`` comments)
or CSV with a header row; for CSV the SMILES column is chosen by name
(``smiles`` by default, matching the MoleculeNet files).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from molgen.chem import Molecule, SmilesError, canonicalize, check_valence, parse_smiles
from molgen.graphs import GraphSpec

log = logging.getLogger(__name__)

MOLGAN_ELEMENTS = ("C", "N", "O", "F")


class NoParseableRowsError(ValueError):
    pass


@dataclass(frozen=True)
class MoleculeDataset:
    name: str
    molecules: tuple[Molecule, ...]
    canonical: tuple[str, ...]
    provenance: str = ""
    n_dropped: int = 0
    warnings: tuple[str, ...] = field(default=(), repr=False)

    @property
    def canonical_set(self) -> set[str]:
        return set(self.canonical)

    def __len__(self) -> int:
        return len(self.molecules)

    @classmethod
    def from_molecules(cls, name: str, mols, provenance: str = "") -> "MoleculeDataset":
        mols = tuple(mols)
        return cls(name, mols, tuple(canonicalize(m) for m in mols), provenance)


def _read_rows(path: Path, column: str | None) -> list[tuple[int, str]]:
    text = path.read_text(encoding="utf-8")
    is_csv = path.suffix.lower() == ".csv" or column is not None
    if not is_csv:
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append((lineno, line.split()[0]))
        return rows
    reader = csv.DictReader(text.splitlines())
    column = column or "smiles"
    if reader.fieldnames is None:
        return []
    if column not in reader.fieldnames:
        raise KeyError(f"column {column!r} not in {path} (columns: {reader.fieldnames})")
    return [(k + 2, (row[column] or "").strip()) for k, row in enumerate(reader)]


def load_smiles_file(path, column: str | None = None, name: str | None = None) -> MoleculeDataset:
    """Parse every row; rows that fail the grammar or the valence table are dropped and counted."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    mols, warnings = [], []
    for lineno, smi in _read_rows(path, column):
        try:
            m = parse_smiles(smi)
        except SmilesError as exc:
            warnings.append(f"{path.name}:{lineno}: {smi!r}: {exc}")
            continue
        if not check_valence(m):
            warnings.append(f"{path.name}:{lineno}: {smi!r}: valence exceeded")
            continue
        mols.append(m)
    if warnings:
        log.warning("%s: dropped %d unparseable/invalid row(s)", path, len(warnings))
    if not mols:
        raise NoParseableRowsError(f"{path}: no parseable SMILES rows")
    ds = MoleculeDataset.from_molecules(name or path.stem, mols, provenance=f"{path} column={column or '-'}")
    return replace(ds, n_dropped=len(warnings), warnings=tuple(warnings))


def filter_for_molgan(ds: MoleculeDataset, spec: GraphSpec = GraphSpec()) -> MoleculeDataset:
    allowed = set(spec.elements)
    keep = [
        (m, c)
        for m, c in zip(ds.molecules, ds.canonical)
        if m.num_atoms <= spec.max_atoms and set(m.atoms) <= allowed
    ]
    note = f"elements<={''.join(spec.elements)}, atoms<={spec.max_atoms}"
    prov = ds.provenance if note in ds.provenance else f"{ds.provenance}; filter {note}"
    return replace(
        ds,
        molecules=tuple(m for m, _ in keep),
        canonical=tuple(c for _, c in keep),
        provenance=prov,
    )


def subsample(ds: MoleculeDataset, k: int, seed: int) -> MoleculeDataset:
    if k > len(ds):
        raise ValueError(f"cannot draw {k} molecules from a dataset of {len(ds)}")
    if k < 0:
        raise ValueError("k must be non-negative")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    idx = rng.choice(len(ds), size=k, replace=False)
    return replace(
        ds,
        molecules=tuple(ds.molecules[i] for i in idx),
        canonical=tuple(ds.canonical[i] for i in idx),
        provenance=f"{ds.provenance}; subsample k={k} seed={seed}",
    )


def max_atoms(ds: MoleculeDataset) -> int:
    return max((m.num_atoms for m in ds.molecules), default=0)


def dataset_stats(ds: MoleculeDataset) -> dict:
    sizes = [m.num_atoms for m in ds.molecules]
    elements: dict[str, int] = {}
    for m in ds.molecules:
        for a in m.atoms:
            elements[a] = elements.get(a, 0) + 1
    return {
        "name": ds.name,
        "molecules": len(ds),
        "distinct": len(ds.canonical_set),
        "dropped_rows": ds.n_dropped,
        "max_atoms": max(sizes, default=0),
        "mean_atoms": float(np.mean(sizes)) if sizes else 0.0,
        "elements": elements,
    }
