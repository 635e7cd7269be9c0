"""Generator MLP, relational-graph-convolution critic, and the categorical relaxations."""
from __future__ import annotations

import numpy as np

from molgen.diff import (
    ShapeMismatchError,
    Tensor,
    concat,
    dropout,
    matmul,
    no_grad,
    sigmoid,
    softmax,
    tanh,
    transpose,
)
from molgen.diff.nn import MLP, Linear, Module
from molgen.molgan.config import MolganConfig


def sample_latent(rng: np.random.Generator, batch: int, latent_dim: int) -> Tensor:
    return Tensor(rng.standard_normal((batch, latent_dim)))


class Generator(Module):
    """z -> (node logits (B, N, D), edge logits (B, N, N, Y)); edge logits are symmetric."""

    def __init__(self, config: MolganConfig, rng: np.random.Generator):
        spec = config.spec
        self.n, self.d, self.y = spec.max_atoms, spec.node_types, spec.edge_types
        sizes = [config.latent_dim, *config.generator_hidden]
        self.hidden = [Linear(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        width = sizes[-1]
        self.nodes_head = Linear(rng, width, self.n * self.d)
        self.edges_head = Linear(rng, width, self.n * self.n * self.y)
        self.dropout_rate = config.dropout

    def __call__(self, z: Tensor, training: bool = False, rng=None) -> tuple[Tensor, Tensor]:
        h = z
        for layer in self.hidden:
            h = dropout(tanh(layer(h)), self.dropout_rate, training, rng)
        b = z.shape[0]
        nodes = self.nodes_head(h).reshape(b, self.n, self.d)
        edges = self.edges_head(h).reshape(b, self.n, self.n, self.y)
        edges = (edges + edges.swapaxes(1, 2)) * 0.5
        return nodes, edges


def _symmetric_gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    g = rng.gumbel(size=shape)
    n = shape[1]
    iu = np.triu_indices(n, k=1)
    out = np.zeros(shape)
    out[:, iu[0], iu[1]] = g[:, iu[0], iu[1]]
    out[:, iu[1], iu[0]] = g[:, iu[0], iu[1]]
    out[:, np.arange(n), np.arange(n)] = g[:, np.arange(n), np.arange(n)]
    return out


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.gumbel(size=shape)


def relax(
    logits: Tensor, mode: str, temperature: float, noise: np.ndarray | None = None
) -> Tensor:
    """Continuous stand-in for a categorical sample along the last axis."""
    if mode == "softmax":
        return softmax(logits, axis=-1)
    if mode == "gumbel":
        if noise is None:
            raise ValueError("gumbel mode needs noise")
        return softmax((logits + noise) * (1.0 / temperature), axis=-1)
    if mode == "straight_through":
        soft = softmax(logits * (1.0 / temperature), axis=-1)
        hard = np.eye(logits.shape[-1])[np.argmax(soft.data, axis=-1)]
        return soft + Tensor(hard - soft.data)
    raise ValueError(f"unknown sampling mode {mode!r}")


def generate(
    G: Generator,
    z: Tensor,
    mode: str,
    temperature: float,
    rng: np.random.Generator | None = None,
    training: bool = False,
    dropout_rng=None,
) -> tuple[Tensor, Tensor]:
    """Generator forward plus relaxation. Gumbel noise on edges is drawn symmetrically."""
    nodes, edges = G(z, training=training, rng=dropout_rng)
    node_noise = edge_noise = None
    if mode == "gumbel":
        node_noise = gumbel_noise(rng, nodes.shape)
        edge_noise = _symmetric_gumbel(rng, edges.shape)
    return (
        relax(nodes, mode, temperature, node_noise),
        relax(edges, mode, temperature, edge_noise),
    )


class GraphConvolution(Module):
    """One relational layer: self transform plus per-bond-type neighbour messages."""

    def __init__(self, rng, n_in: int, n_out: int, n_bond_types: int):
        self.self_lin = Linear(rng, n_in, n_out)
        # all bond types share one (n_in, T * n_out) matrix; column block t belongs to type t
        limit = np.sqrt(6.0 / (n_in + n_out))
        self.edge_weight = Tensor(rng.uniform(-limit, limit, (n_in, n_bond_types * n_out)), requires_grad=True)
        self.edge_bias = Tensor(np.zeros(n_bond_types * n_out), requires_grad=True)
        self.n_bond_types, self.n_out = n_bond_types, n_out

    def __call__(self, inp: Tensor, adj: Tensor, norm: float) -> Tensor:
        # inp (B, N, F); adj (B, T, N, N) bond channels with zeroed diagonal
        b, n, f = inp.shape
        messages = matmul(inp.reshape(b * n, f), self.edge_weight) + self.edge_bias
        messages = messages.reshape(b, n, self.n_bond_types, self.n_out).transpose(0, 2, 1, 3)
        pooled = matmul(adj, messages).sum(axis=1) * (1.0 / norm)
        return tanh(self.self_lin(inp) + pooled)


class Discriminator(Module):
    def __init__(self, config: MolganConfig, rng: np.random.Generator):
        spec = config.spec
        self.n, self.d = spec.max_atoms, spec.node_types
        bond_types = spec.edge_types - 1
        self.convs = []
        width = 0
        for w in config.conv_widths:
            self.convs.append(GraphConvolution(rng, width + self.d, w, bond_types))
            width = w
        self.gate = Linear(rng, width + self.d, config.aggregation_width)
        self.value = Linear(rng, width + self.d, config.aggregation_width)
        self.head = MLP(
            rng, [config.aggregation_width, *config.discriminator_hidden, 1], dropout_rate=config.dropout
        )
        self.dropout_rate = config.dropout
        self._offdiag = 1.0 - np.eye(self.n)

    def __call__(self, X: Tensor, A: Tensor, training: bool = False, rng=None) -> Tensor:
        """Score per graph, shape (B,). ``A`` may be soft; only bond channels are used."""
        if X.ndim != 3 or A.ndim != 4 or X.shape[1:] != (self.n, self.d) or A.shape[1:3] != (self.n, self.n):
            raise ShapeMismatchError(f"bad graph shapes X{X.shape} A{A.shape}")
        adj = transpose(A[:, :, :, 1:], (0, 3, 1, 2)) * self._offdiag
        norm = max(self.n - 1, 1)
        h = None
        for conv in self.convs:
            inp = X if h is None else concat([h, X], axis=-1)
            h = conv(inp, adj, norm)
        hx = concat([h, X], axis=-1)
        graph = tanh((sigmoid(self.gate(hx)) * tanh(self.value(hx))).sum(axis=1))
        graph = dropout(graph, self.dropout_rate, training, rng)
        return self.head(graph, training=training, rng=rng).reshape(-1)


def discriminate(D: Discriminator, X, A, training: bool = False, rng=None) -> Tensor:
    X = X if isinstance(X, Tensor) else Tensor(X)
    A = A if isinstance(A, Tensor) else Tensor(A)
    return D(X, A, training=training, rng=rng)


def generate_numpy(G, z, mode, temperature, rng) -> tuple[np.ndarray, np.ndarray]:
    with no_grad():
        x, a = generate(G, z, mode, temperature, rng)
    return x.data, a.data
