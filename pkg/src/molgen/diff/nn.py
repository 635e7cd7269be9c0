"""Minimal parameter containers built on :mod:`molgen.diff.tensor`."""
from __future__ import annotations

import numpy as np

from molgen.diff.tensor import Tensor, dropout, matmul, tanh


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Module:
    """Anything exposing ``named_parameters``; children are discovered by attribute."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((key, value))
            elif isinstance(value, Module):
                out += value.named_parameters(key + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out += item.named_parameters(f"{key}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{key}.{i}", item))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, zero: bool = False):
        if zero:
            self.weight = Tensor(np.zeros((n_in, n_out)), requires_grad=True)
        else:
            self.weight = glorot(rng, n_in, n_out)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 2:
            return matmul(x, self.weight) + self.bias
        lead = x.shape[:-1]
        flat = matmul(x.reshape(-1, x.shape[-1]), self.weight) + self.bias
        return flat.reshape(*lead, self.weight.shape[1])


class MLP(Module):
    """tanh hidden layers, linear output; dropout after each hidden activation."""

    def __init__(self, rng, sizes: list[int], dropout_rate: float = 0.0, zero_last: bool = False):
        self.layers = [
            Linear(rng, a, b, zero=zero_last and k == len(sizes) - 2)
            for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        self.dropout_rate = dropout_rate

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        for layer in self.layers[:-1]:
            x = tanh(layer(x))
            x = dropout(x, self.dropout_rate, training, rng)
        return self.layers[-1](x)
