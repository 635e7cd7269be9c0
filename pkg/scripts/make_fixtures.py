"""Regenerate the synthetic QM7-style fixture (small C/N/O/F molecules).

    python scripts/make_fixtures.py --count 500 --max-atoms 7 --seed 7 > tests/data/qm7_style_cnof.smi
"""
import argparse
import sys

import numpy as np

from molgen.chem import MAX_VALENCE, Molecule, canonicalize, check_valence, is_connected

ELEMENTS = ("C", "N", "O", "F")
ELEMENT_P = (0.62, 0.15, 0.18, 0.05)


def grow(rng: np.random.Generator, max_atoms: int) -> Molecule:
    n_target = int(rng.integers(2, max_atoms + 1))
    atoms = ["C" if rng.random() < 0.8 else str(rng.choice(ELEMENTS, p=ELEMENT_P))]
    bonds: dict[tuple[int, int], int] = {}
    free = [MAX_VALENCE[atoms[0]]]
    while len(atoms) < n_target:
        hosts = [i for i, f in enumerate(free) if f > 0]
        if not hosts:
            break
        host = int(rng.choice(hosts))
        el = str(rng.choice(ELEMENTS, p=ELEMENT_P))
        cap = min(free[host], MAX_VALENCE[el])
        order = int(rng.choice([1, 2, 3], p=[0.8, 0.15, 0.05]))
        order = min(order, cap)
        if MAX_VALENCE[el] == order and len(atoms) + 1 < n_target and len(hosts) == 1:
            order = 1 if MAX_VALENCE[el] > 1 else order
        atoms.append(el)
        free.append(MAX_VALENCE[el] - order)
        free[host] -= order
        bonds[(host, len(atoms) - 1)] = order
    # occasional ring closures
    for _ in range(2):
        if rng.random() < 0.35 and len(atoms) >= 3:
            cand = [
                (i, j)
                for i in range(len(atoms))
                for j in range(i + 2, len(atoms))
                if free[i] > 0 and free[j] > 0 and (i, j) not in bonds
            ]
            if cand:
                i, j = cand[int(rng.integers(len(cand)))]
                bonds[(i, j)] = 1
                free[i] -= 1
                free[j] -= 1
    return Molecule(tuple(atoms), frozenset((i, j, o) for (i, j), o in bonds.items()))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--max-atoms", type=int, default=7)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    seen: set[str] = set()
    out = []
    while len(out) < args.count:
        m = grow(rng, args.max_atoms)
        if not (check_valence(m) and is_connected(m)):
            continue
        c = canonicalize(m)
        if c in seen:
            continue
        seen.add(c)
        out.append(c)
    sys.stdout.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
