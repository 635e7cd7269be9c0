"""Independent reference implementations used only by the tests.

Nothing here imports the code under test beyond the plain ``Molecule``
container, so agreement is evidence rather than tautology.
"""
from __future__ import annotations

import itertools

import numpy as np


def isomorphic(m1, m2) -> bool:
    """Backtracking labelled-graph isomorphism (element labels and bond orders)."""
    n = m1.num_atoms
    if n != m2.num_atoms or len(m1.bonds) != len(m2.bonds):
        return False
    if sorted(m1.atoms) != sorted(m2.atoms):
        return False
    adj1 = [dict() for _ in range(n)]
    adj2 = [dict() for _ in range(n)]
    for i, j, o in m1.bonds:
        adj1[i][j] = adj1[j][i] = o
    for i, j, o in m2.bonds:
        adj2[i][j] = adj2[j][i] = o

    def sig(atoms, adj, i):
        return atoms[i], tuple(sorted(adj[i].values()))

    sig1 = [sig(m1.atoms, adj1, i) for i in range(n)]
    sig2 = [sig(m2.atoms, adj2, i) for i in range(n)]
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(k: int) -> bool:
        if k == n:
            return True
        for cand in range(n):
            if cand in used or sig1[k] != sig2[cand]:
                continue
            ok = True
            for prev, img in mapping.items():
                if adj1[k].get(prev, 0) != adj2[cand].get(img, 0):
                    ok = False
                    break
            if not ok:
                continue
            mapping[k] = cand
            used.add(cand)
            if extend(k + 1):
                return True
            del mapping[k]
            used.discard(cand)
        return False

    return extend(0)


def all_permutations(n: int):
    return itertools.permutations(range(n))


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """d f(x) / dx for scalar-valued ``f`` by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def jacobian(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Jacobian of a vector map R^d -> R^d at ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    d = x.size
    J = np.zeros((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        J[:, k] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def rel_error(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def valence_ok(m, table=None) -> bool:
    table = table or {"C": 4, "N": 3, "O": 2, "F": 1, "S": 2}
    used = [0] * m.num_atoms
    for i, j, o in m.bonds:
        used[i] += o
        used[j] += o
    return all(used[i] <= table[a] for i, a in enumerate(m.atoms))


def connected(m) -> bool:
    if m.num_atoms == 0:
        return False
    seen = {0}
    frontier = [0]
    adj = [[] for _ in range(m.num_atoms)]
    for i, j, _ in m.bonds:
        adj[i].append(j)
        adj[j].append(i)
    while frontier:
        u = frontier.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return len(seen) == m.num_atoms
