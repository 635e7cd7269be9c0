"""One-hot node/adjacency tensors for molecular graphs.

Node channel order is ``spec.elements`` followed by PAD (last). Edge channel 0 is
"no bond", channels 1..3 are single/double/triple.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from molgen.chem import Molecule


class TooManyAtomsError(ValueError):
    pass


class ElementNotInVocabularyError(ValueError):
    pass


@dataclass(frozen=True)
class GraphSpec:
    max_atoms: int = 9
    elements: tuple[str, ...] = ("C", "N", "O", "F")
    edge_types: int = 4

    def __post_init__(self):
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be >= 1")
        if len(self.elements) < 1:
            raise ValueError("need at least one element besides PAD")
        if not 2 <= self.edge_types <= 4:
            raise ValueError("edge_types must be in [2, 4] (no-bond plus up to triple)")

    @property
    def node_types(self) -> int:
        return len(self.elements) + 1

    @property
    def pad_index(self) -> int:
        return len(self.elements)


@dataclass
class GraphTensors:
    X: np.ndarray  # (N, D)
    A: np.ndarray  # (N, N, Y)


def featurize(m: Molecule, spec: GraphSpec = GraphSpec()) -> GraphTensors:
    n, d, y = spec.max_atoms, spec.node_types, spec.edge_types
    if m.num_atoms > n:
        raise TooManyAtomsError(f"{m.num_atoms} atoms > max_atoms={n}")
    X = np.zeros((n, d))
    for i, a in enumerate(m.atoms):
        if a not in spec.elements:
            raise ElementNotInVocabularyError(f"element {a!r} not in {spec.elements}")
        X[i, spec.elements.index(a)] = 1.0
    X[m.num_atoms :, spec.pad_index] = 1.0
    A = np.zeros((n, n, y))
    A[..., 0] = 1.0
    for i, j, o in m.bonds:
        if o >= y:
            raise ValueError(f"bond order {o} not representable with {y} edge types")
        A[i, j, 0] = A[j, i, 0] = 0.0
        A[i, j, o] = A[j, i, o] = 1.0
    return GraphTensors(X, A)


def featurize_batch(mols, spec: GraphSpec = GraphSpec()) -> tuple[np.ndarray, np.ndarray]:
    gs = [featurize(m, spec) for m in mols]
    return np.stack([g.X for g in gs]), np.stack([g.A for g in gs])


def defeaturize(g: GraphTensors, spec: GraphSpec = GraphSpec()) -> Molecule:
    """Argmax-decode a one-hot graph; PAD atoms and their bonds vanish. Valence is not checked."""
    node = np.argmax(g.X, axis=-1)
    edge = np.argmax(g.A, axis=-1)
    keep = [i for i in range(spec.max_atoms) if node[i] != spec.pad_index]
    new_index = {old: k for k, old in enumerate(keep)}
    atoms = tuple(spec.elements[node[i]] for i in keep)
    bonds = set()
    for a in keep:
        for b in keep:
            if a < b and edge[a, b] > 0:
                bonds.add((new_index[a], new_index[b], int(edge[a, b])))
    return Molecule(atoms, frozenset(bonds))


def _one_hot(idx: np.ndarray, k: int) -> np.ndarray:
    return np.eye(k)[idx]


def one_hot_argmax(X: np.ndarray, A: np.ndarray, spec: GraphSpec = GraphSpec()) -> GraphTensors:
    """Discretize continuous generator output (single graph or batch).

    ``A`` is symmetrized by averaging with its transpose before the argmax; the
    diagonal and every pair touching a PAD atom are forced to no-bond. ``np.argmax``
    breaks ties toward the lowest index.
    """
    X = np.asarray(X, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    sym = 0.5 * (A + np.swapaxes(A, -3, -2))
    node = np.argmax(X, axis=-1)
    edge = np.argmax(sym, axis=-1)
    n = X.shape[-2]
    edge = np.where(np.eye(n, dtype=bool), 0, edge)
    pad = node == spec.pad_index
    touching = pad[..., :, None] | pad[..., None, :]
    edge = np.where(touching, 0, edge)
    return GraphTensors(_one_hot(node, X.shape[-1]), _one_hot(edge, A.shape[-1]))


def graph_dump(g: GraphTensors) -> str:
    """Compact text form used for INVALID records: node indices | upper-triangle edge indices."""
    node = np.argmax(g.X, axis=-1)
    edge = np.argmax(g.A, axis=-1)
    iu = np.triu_indices(len(node), k=1)
    return "nodes=" + ",".join(map(str, node)) + " edges=" + "".join(map(str, edge[iu]))
