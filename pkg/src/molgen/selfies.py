"""SELFIES-style token codec whose decoder is total and always valence-valid.

Grammar (tokens are rendered in brackets):

* ``[nop]`` - padding; decoding stops at the first one.
* ``[X]``, ``[=X]``, ``[#X]`` - add atom ``X`` bonded to the current atom with the
  given order. The order is lowered to whatever valence is left; if the current
  atom has none left the chain ends.
* ``[BranchK]`` - the next ``K`` tokens are read as a number ``Q`` (base ``V-1``,
  each token worth ``index - 1``) and the following ``Q + 1`` tokens form a side
  chain rooted at the current atom. Skipped when the current atom has fewer than
  two free valences, so the main chain can always continue.
* ``[RingK]``, ``[=RingK]``, ``[#RingK]`` - ``Q`` as above; bond the current atom to
  the atom created ``Q + 1`` atoms earlier (clamped to the first atom).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from molgen.chem import MAX_VALENCE, Molecule, check_valence, is_connected

DEFAULT_ELEMENTS = ("C", "N", "O", "F")
_ORDER_PREFIX = {1: "", 2: "=", 3: "#"}


class UnencodableError(ValueError):
    pass


class IndexOutOfVocabularyError(IndexError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # "pad" | "atom" | "branch" | "ring"
    element: str | None = None
    order: int = 1
    length_index: int = 0

    def __str__(self) -> str:
        if self.kind == "pad":
            return "[nop]"
        if self.kind == "atom":
            return f"[{_ORDER_PREFIX[self.order]}{self.element}]"
        if self.kind == "branch":
            return f"[Branch{self.length_index}]"
        return f"[{_ORDER_PREFIX[self.order]}Ring{self.length_index}]"


PAD = Token("pad")


def atom(element: str, order: int = 1) -> Token:
    return Token("atom", element, order)


def branch(k: int) -> Token:
    return Token("branch", length_index=k)


def ring(k: int, order: int = 1) -> Token:
    return Token("ring", order=order, length_index=k)


@lru_cache(maxsize=None)
def vocabulary(elements: tuple[str, ...] = DEFAULT_ELEMENTS) -> tuple[Token, ...]:
    """Pad first, then single-bond atoms, double/triple bond atoms, branches, rings.

    Bond-atom tokens are only listed for orders the element can carry.
    """
    toks = [PAD]
    toks += [atom(e) for e in elements]
    for order in (2, 3):
        toks += [atom(e, order) for e in elements if MAX_VALENCE[e] >= order]
    toks += [branch(1), branch(2)]
    for k in (1, 2):
        toks += [ring(k, order) for order in (1, 2, 3)]
    return tuple(toks)


def token_index(elements: tuple[str, ...] = DEFAULT_ELEMENTS) -> dict[Token, int]:
    return {t: i for i, t in enumerate(vocabulary(elements))}


def tokens_to_indices(tokens: Sequence[Token], elements=DEFAULT_ELEMENTS) -> list[int]:
    table = token_index(tuple(elements))
    try:
        return [table[t] for t in tokens]
    except KeyError as exc:
        raise IndexOutOfVocabularyError(f"token {exc.args[0]} not in vocabulary") from None


def indices_to_tokens(indices: Sequence[int], elements=DEFAULT_ELEMENTS) -> list[Token]:
    vocab = vocabulary(tuple(elements))
    out = []
    for i in indices:
        i = int(i)
        if not 0 <= i < len(vocab):
            raise IndexOutOfVocabularyError(f"index {i} outside vocabulary of size {len(vocab)}")
        out.append(vocab[i])
    return out


def render(tokens: Sequence[Token]) -> str:
    return "".join(str(t) for t in tokens)


def parse_rendered(text: str, elements=DEFAULT_ELEMENTS) -> list[Token]:
    by_name = {str(t): t for t in vocabulary(tuple(elements))}
    out = []
    for part in text.replace("]", "]\n").split():
        if part not in by_name:
            raise IndexOutOfVocabularyError(f"unknown token {part}")
        out.append(by_name[part])
    return out


# ---------------------------------------------------------------- decoding


def decode(tokens: Sequence[Token], elements=DEFAULT_ELEMENTS) -> Molecule:
    """Derive a molecule; never fails, never violates valence."""
    vocab = vocabulary(tuple(elements))
    table = token_index(tuple(elements))
    base = len(vocab) - 1
    seq = []
    for t in tokens:
        if t.kind == "pad":
            break
        seq.append(t)

    atoms: list[str] = []
    free: list[int] = []
    bonds: dict[tuple[int, int], int] = {}

    def read_number(pos: int, k: int) -> tuple[int | None, int]:
        if pos + k > len(seq):
            return None, len(seq)
        q = 0
        for t in seq[pos : pos + k]:
            q = q * base + (table[t] - 1)
        return q, pos + k

    def add_atom(element: str) -> int:
        atoms.append(element)
        free.append(MAX_VALENCE[element])
        return len(atoms) - 1

    def derive(pos: int, end: int, root: int | None, reserve: int) -> tuple[int, bool]:
        """Returns (position reached, chain still alive)."""
        prev = root
        first = True
        while pos < end:
            t = seq[pos]
            pos += 1
            if t.kind == "atom":
                if prev is None:
                    prev = add_atom(t.element)
                    first = False
                    continue
                room = free[prev] - (reserve if first else 0)
                if room <= 0:
                    return end, False
                order = min(t.order, room, MAX_VALENCE[t.element])
                new = add_atom(t.element)
                bonds[(prev, new)] = order
                free[prev] -= order
                free[new] -= order
                prev = new
                first = False
            elif t.kind == "branch":
                q, pos = read_number(pos, t.length_index)
                if q is None:
                    return end, True
                stop = min(pos + q + 1, end)
                if prev is not None and free[prev] >= 2:
                    derive(pos, stop, prev, reserve=1)
                pos = stop
            else:  # ring
                q, pos = read_number(pos, t.length_index)
                if q is None or prev is None:
                    continue
                target = max(prev - (q + 1), 0)
                if target == prev:
                    continue
                key = (target, prev)
                room = min(free[prev], free[target])
                if room <= 0:
                    continue
                if key in bonds:
                    extra = min(t.order, room, 3 - bonds[key])
                    if extra > 0:
                        bonds[key] += extra
                        free[prev] -= extra
                        free[target] -= extra
                else:
                    order = min(t.order, room)
                    bonds[key] = order
                    free[prev] -= order
                    free[target] -= order
        return pos, True

    derive(0, len(seq), None, reserve=0)
    if not atoms:
        return Molecule(("C",))
    return Molecule(tuple(atoms), frozenset((i, j, o) for (i, j), o in bonds.items()))


# ---------------------------------------------------------------- encoding


def _number_tokens(q: int, k: int, vocab: tuple[Token, ...]) -> list[Token]:
    base = len(vocab) - 1
    digits = []
    for _ in range(k):
        digits.append(q % base)
        q //= base
    return [vocab[d + 1] for d in reversed(digits)]


def _number_width(q: int, base: int) -> int:
    if q < base:
        return 1
    if q < base * base:
        return 2
    raise UnencodableError(f"length {q} too large for a two-token index")


def encode(m: Molecule, elements=DEFAULT_ELEMENTS) -> list[Token]:
    """Encode a valence-valid, connected molecule (no padding)."""
    elements = tuple(elements)
    for a in m.atoms:
        if a not in elements:
            raise UnencodableError(f"element {a!r} not in vocabulary {elements}")
    if m.num_atoms == 0:
        raise UnencodableError("empty molecule")
    if not check_valence(m) or not is_connected(m):
        raise UnencodableError("molecule must be valence-valid and connected")
    vocab = vocabulary(elements)
    base = len(vocab) - 1
    adj = m.neighbors()
    order_of = {(i, j): o for i, j, o in m.bonds}
    order_of.update({(j, i): o for i, j, o in m.bonds})

    # DFS tree first so that creation order is known before emitting ring tokens
    created: dict[int, int] = {}
    children: list[list[int]] = [[] for _ in m.atoms]
    stack = [(0, -1)]
    while stack:
        u, par = stack.pop()
        if u in created:
            continue
        created[u] = len(created)
        if par >= 0:
            children[par].append(u)
        for v, _ in reversed(adj[u]):
            if v not in created:
                stack.append((v, u))
    tree = {(u, v) for u in range(m.num_atoms) for v in children[u]}
    tree |= {(v, u) for u, v in tree}

    # creation order of the decoder: branch children first (in order), last child continues
    # the chain; that is exactly a preorder where the last child is visited last, which the
    # DFS above already produced.
    def emit(u: int, incoming: int | None) -> list[Token]:
        out = [atom(m.atoms[u], incoming or 1)]
        for v, o in adj[u]:
            if (u, v) in tree or created[v] > created[u]:
                continue
            q = created[u] - created[v] - 1
            k = _number_width(q, base)
            out.append(ring(k, o))
            out += _number_tokens(q, k, vocab)
        kids = children[u]
        for idx, v in enumerate(kids):
            body = emit(v, order_of[(u, v)])
            if idx == len(kids) - 1:
                out += body
            else:
                q = len(body) - 1
                k = _number_width(q, base)
                out.append(branch(k))
                out += _number_tokens(q, k, vocab)
                out += body
        return out

    return emit(0, None)


def pad(tokens: Sequence[Token], fixed_length: int) -> list[Token]:
    if len(tokens) > fixed_length:
        raise ValueError(f"sequence of length {len(tokens)} exceeds fixed length {fixed_length}")
    return list(tokens) + [PAD] * (fixed_length - len(tokens))


def encode_padded(m: Molecule, fixed_length: int, elements=DEFAULT_ELEMENTS) -> list[Token]:
    return pad(encode(m, elements), fixed_length)
