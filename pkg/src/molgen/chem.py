"""Molecule data model, SMILES subset reader/writer, valence rules and canonical strings.

The SMILES dialect handled here is deliberately small: organic atoms from the
element table below, explicit ``=``/``#`` bonds (``-`` is accepted as an explicit
single bond), branches, ring-closure digits (``1``-``9`` and ``%nn``) and ``.``
for disconnected parts. Hydrogens are always implicit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

MAX_VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1, "S": 2}
ELEMENTS = tuple(MAX_VALENCE)

BOND_SYMBOL = {1: "", 2: "=", 3: "#"}
_SYMBOL_BOND = {"-": 1, "=": 2, "#": 3}

CANONICAL_MAX_ATOMS = 32


class SmilesError(ValueError):
    """Base class for SMILES parse failures."""


class UnknownAtomError(SmilesError):
    pass


class UnbalancedParenthesisError(SmilesError):
    pass


class DanglingRingClosureError(SmilesError):
    pass


class ValenceExceededError(SmilesError):
    pass


class TooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class Molecule:
    """Heavy-atom graph. ``bonds`` holds ``(i, j, order)`` with ``i < j``."""

    atoms: tuple[str, ...]
    bonds: frozenset[tuple[int, int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        seen = set()
        norm = set()
        for i, j, order in self.bonds:
            if i > j:
                i, j = j, i
            if i == j:
                raise ValueError(f"self-bond on atom {i}")
            if not (0 <= i and j < len(atoms)):
                raise ValueError(f"bond ({i}, {j}) out of range for {len(atoms)} atoms")
            if order not in (1, 2, 3):
                raise ValueError(f"bond order must be 1, 2 or 3, got {order}")
            if (i, j) in seen:
                raise ValueError(f"duplicate bond between atoms {i} and {j}")
            seen.add((i, j))
            norm.add((i, j, int(order)))
        for a in atoms:
            if a not in MAX_VALENCE:
                raise UnknownAtomError(f"unknown element {a!r}")
        object.__setattr__(self, "bonds", frozenset(norm))

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self) -> list[list[tuple[int, int]]]:
        """Adjacency list of ``(neighbor, order)`` pairs, sorted by neighbor index."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for i, j, order in self.bonds:
            adj[i].append((j, order))
            adj[j].append((i, order))
        for row in adj:
            row.sort()
        return adj

    def bond_order_sums(self) -> list[int]:
        total = [0] * len(self.atoms)
        for i, j, order in self.bonds:
            total[i] += order
            total[j] += order
        return total

    def permute(self, perm: Iterable[int]) -> "Molecule":
        """Relabel atoms so that old atom ``k`` becomes new atom ``perm[k]``."""
        perm = list(perm)
        if sorted(perm) != list(range(len(self.atoms))):
            raise ValueError("not a permutation of the atom indices")
        atoms = [""] * len(perm)
        for old, new in enumerate(perm):
            atoms[new] = self.atoms[old]
        bonds = frozenset(
            (min(perm[i], perm[j]), max(perm[i], perm[j]), o) for i, j, o in self.bonds
        )
        return Molecule(tuple(atoms), bonds)


def check_valence(m: Molecule) -> bool:
    return all(s <= MAX_VALENCE[a] for a, s in zip(m.atoms, m.bond_order_sums()))


def is_connected(m: Molecule) -> bool:
    if m.num_atoms == 0:
        return True
    adj = m.neighbors()
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == m.num_atoms


# ---------------------------------------------------------------- parsing


def _ring_label(text: str, pos: int) -> tuple[int, int] | None:
    ch = text[pos]
    if ch.isdigit():
        return int(ch), pos + 1
    if ch == "%":
        digits = text[pos + 1 : pos + 3]
        if len(digits) != 2 or not digits.isdigit():
            raise DanglingRingClosureError(f"malformed '%' ring label at position {pos}")
        return int(digits), pos + 3
    return None


def parse_smiles(text: str) -> Molecule:
    if not text or not text.strip():
        raise SmilesError("empty SMILES string")
    text = text.strip()
    atoms: list[str] = []
    bonds: dict[tuple[int, int], int] = {}
    used = []  # running bond-order sum per atom
    branch_stack: list[int] = []
    open_rings: dict[int, tuple[int, int | None]] = {}
    prev: int | None = None
    pending_bond: int | None = None
    pos = 0

    def add_bond(i: int, j: int, order: int, where: int) -> None:
        key = (min(i, j), max(i, j))
        if i == j or key in bonds:
            raise SmilesError(f"invalid repeated or self bond at position {where}")
        bonds[key] = order
        for k in (i, j):
            used[k] += order
            if used[k] > MAX_VALENCE[atoms[k]]:
                raise ValenceExceededError(
                    f"atom {k} ({atoms[k]}) exceeds valence {MAX_VALENCE[atoms[k]]} "
                    f"at position {where}"
                )

    while pos < len(text):
        ch = text[pos]
        if ch in _SYMBOL_BOND:
            if pending_bond is not None or prev is None:
                raise SmilesError(f"unexpected bond symbol {ch!r} at position {pos}")
            pending_bond = _SYMBOL_BOND[ch]
            pos += 1
        elif ch == "(":
            if prev is None or pending_bond is not None:
                raise UnbalancedParenthesisError(f"branch opened without an atom at position {pos}")
            branch_stack.append(prev)
            pos += 1
        elif ch == ")":
            if not branch_stack:
                raise UnbalancedParenthesisError(f"unmatched ')' at position {pos}")
            if pending_bond is not None:
                raise SmilesError(f"bond symbol before ')' at position {pos}")
            prev = branch_stack.pop()
            pos += 1
        elif ch == ".":
            if branch_stack:
                raise UnbalancedParenthesisError(f"'.' inside a branch at position {pos}")
            if pending_bond is not None or prev is None:
                raise SmilesError(f"unexpected '.' at position {pos}")
            prev = None
            pos += 1
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise DanglingRingClosureError(f"ring label without an atom at position {pos}")
            label, nxt = _ring_label(text, pos)
            if label in open_rings:
                other, order = open_rings.pop(label)
                if order is not None and pending_bond is not None and order != pending_bond:
                    raise SmilesError(f"conflicting ring bond orders for label {label}")
                add_bond(other, prev, pending_bond or order or 1, pos)
            else:
                open_rings[label] = (prev, pending_bond)
            pending_bond = None
            pos = nxt
        elif ch.isalpha() or ch == "[":
            if ch == "[":
                end = text.find("]", pos)
                token = text[pos : end + 1] if end >= 0 else text[pos:]
                raise UnknownAtomError(f"bracket atoms are not supported: {token!r} at position {pos}")
            if ch.islower():
                raise UnknownAtomError(
                    f"aromatic atom {ch!r} at position {pos}; kekulize the input first"
                )
            two = text[pos : pos + 2]
            if two in ("Cl", "Br"):
                raise UnknownAtomError(f"unknown atom {two!r} at position {pos}")
            if ch not in MAX_VALENCE:
                raise UnknownAtomError(f"unknown atom {ch!r} at position {pos}")
            atoms.append(ch)
            used.append(0)
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending_bond or 1, pos)
            elif pending_bond is not None:
                raise SmilesError(f"bond symbol without a preceding atom at position {pos}")
            pending_bond = None
            prev = idx
            pos += 1
        else:
            raise SmilesError(f"unexpected character {ch!r} at position {pos}")

    if branch_stack:
        raise UnbalancedParenthesisError("unclosed '('")
    if open_rings:
        labels = ", ".join(str(k) for k in sorted(open_rings))
        raise DanglingRingClosureError(f"unclosed ring label(s): {labels}")
    if pending_bond is not None:
        raise SmilesError("trailing bond symbol")
    return Molecule(tuple(atoms), frozenset((i, j, o) for (i, j), o in bonds.items()))


# ---------------------------------------------------------------- writing


def _format_label(label: int) -> str:
    return str(label) if label < 10 else f"%{label:02d}"


def write_smiles(m: Molecule, order: list[int] | None = None) -> str:
    """Write ``m`` as SMILES.

    ``order`` optionally ranks atoms (lower rank visited first); traversal is a
    depth-first walk that starts each component at its lowest-ranked atom.
    """
    n = m.num_atoms
    if n == 0:
        return ""
    rank = list(range(n)) if order is None else list(order)
    adj = m.neighbors()
    for row in adj:
        row.sort(key=lambda e: rank[e[0]])

    # first pass: DFS tree, classify ring-closure edges
    visited = [False] * n
    visit_order: list[int] = []
    parent = [-1] * n
    children: list[list[int]] = [[] for _ in range(n)]
    closures: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}  # opener -> (closer, order)
    roots = []
    for start in sorted(range(n), key=rank.__getitem__):
        if visited[start]:
            continue
        roots.append(start)
        stack = [(start, -1)]
        while stack:
            u, par = stack.pop()
            if visited[u]:
                continue
            visited[u] = True
            parent[u] = par
            visit_order.append(u)
            if par >= 0:
                children[par].append(u)
            for v, _ in reversed(adj[u]):
                if not visited[v]:
                    stack.append((v, u))
    pos_in_walk = {u: k for k, u in enumerate(visit_order)}
    tree = {(min(u, p), max(u, p)) for u, p in enumerate(parent) if p >= 0}
    for i, j, o in m.bonds:
        if (i, j) in tree:
            continue
        a, b = (i, j) if pos_in_walk[i] < pos_in_walk[j] else (j, i)
        closures[a].append((b, o))
    for lst in closures.values():
        lst.sort(key=lambda e: pos_in_walk[e[0]])

    bond_order = {(i, j): o for i, j, o in m.bonds}

    def order_of(u: int, v: int) -> int:
        return bond_order[(min(u, v), max(u, v))]

    free_labels = list(range(1, 100))
    open_at: dict[tuple[int, int], int] = {}
    out: list[str] = []

    def emit(u: int) -> None:
        # iterative would be nicer, but molecules here are tiny
        out.append(m.atoms[u])
        # close rings opened earlier that end at u
        for (a, b), label in sorted(open_at.items(), key=lambda kv: kv[1]):
            if b == u:
                out.append(BOND_SYMBOL[order_of(a, b)] + _format_label(label))
                del open_at[(a, b)]
                free_labels.append(label)
                free_labels.sort()
        for b, o in closures[u]:
            label = free_labels.pop(0)
            open_at[(u, b)] = label
            out.append(BOND_SYMBOL[o] + _format_label(label))
        kids = children[u]
        for k, v in enumerate(kids):
            last = k == len(kids) - 1
            if not last:
                out.append("(")
            out.append(BOND_SYMBOL[order_of(u, v)])
            emit(v)
            if not last:
                out.append(")")

    parts = []
    for r in roots:
        out = []
        emit(r)
        parts.append("".join(out))
    return ".".join(parts)


# ---------------------------------------------------------------- canonical form


def _refine(adj: list[list[tuple[int, int]]], colors: list[int]) -> list[int]:
    """Iterated neighbourhood refinement; returns dense ranks stable under relabelling."""
    n = len(colors)
    while True:
        sigs = [
            (colors[u], tuple(sorted((colors[v], o) for v, o in adj[u]))) for u in range(n)
        ]
        ranking = {s: k for k, s in enumerate(sorted(set(sigs)))}
        new = [ranking[s] for s in sigs]
        if len(ranking) == len(set(colors)):
            return new
        colors = new


def _certificate(m: Molecule, perm: list[int]) -> tuple:
    # perm[old] = new position
    atoms = [""] * len(perm)
    for old, new in enumerate(perm):
        atoms[new] = m.atoms[old]
    bonds = sorted(
        (min(perm[i], perm[j]), max(perm[i], perm[j]), o) for i, j, o in m.bonds
    )
    return tuple(ELEMENTS.index(a) for a in atoms), tuple(bonds)


def canonical_order(m: Molecule) -> list[int]:
    """Rank for every atom such that relabelling by it gives a canonical labelled graph."""
    n = m.num_atoms
    if n > CANONICAL_MAX_ATOMS:
        raise TooLargeError(f"{n} atoms exceeds canonicalization bound {CANONICAL_MAX_ATOMS}")
    if n == 0:
        return []
    adj = m.neighbors()
    sums = m.bond_order_sums()
    init = [(ELEMENTS.index(a), len(adj[u]), sums[u]) for u, a in enumerate(m.atoms)]
    table = {s: k for k, s in enumerate(sorted(set(init)))}
    colors = _refine(adj, [table[s] for s in init])

    best: tuple | None = None
    best_perm: list[int] = []

    def search(colors: list[int]) -> None:
        nonlocal best, best_perm
        counts: dict[int, int] = {}
        for c in colors:
            counts[c] = counts.get(c, 0) + 1
        tied = [c for c in sorted(counts) if counts[c] > 1]
        if not tied:
            cert = _certificate(m, colors)
            if best is None or cert < best:
                best, best_perm = cert, list(colors)
            return
        target = tied[0]
        for u in range(n):
            if colors[u] != target:
                continue
            split = [(c, 0 if v == u else 1) for v, c in enumerate(colors)]
            ranking = {s: k for k, s in enumerate(sorted(set(split)))}
            search(_refine(adj, [ranking[s] for s in split]))

    search(colors)
    return best_perm


def canonicalize(m: Molecule) -> str:
    """Canonical SMILES: equal strings iff the molecules are isomorphic."""
    return write_smiles(m, canonical_order(m))


def canonical_smiles(text: str) -> str:
    return canonicalize(parse_smiles(text))


def element_counts(m: Molecule) -> dict[str, int]:
    return {k: len(list(g)) for k, g in itertools.groupby(sorted(m.atoms))}
