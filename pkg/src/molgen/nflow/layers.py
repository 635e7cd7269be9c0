"""Invertible layers. ``forward`` maps base space to data space, ``inverse`` goes back.

Both return ``(output, logdet)`` with ``logdet`` of shape (batch,), the log
absolute Jacobian determinant of the map that was applied.
"""
from __future__ import annotations

import numpy as np

from molgen.diff import Tensor, as_tensor, exp, logabsdet, matmul, solve, tanh, transpose
from molgen.diff.nn import MLP, Module


class SingularWeightError(ValueError):
    pass


class FlowLayer(Module):
    def forward(self, z: Tensor) -> tuple[Tensor, Tensor]:
        raise NotImplementedError

    def inverse(self, x: Tensor) -> tuple[Tensor, Tensor]:
        raise NotImplementedError


def _ones(batch: int) -> np.ndarray:
    return np.ones(batch)


class ActNorm(FlowLayer):
    """Per-dimension ``x = z * exp(log_scale) + bias`` with data-dependent initialisation."""

    VAR_FLOOR = 1e-6

    def __init__(self, dim: int):
        self.dim = dim
        self.log_scale = Tensor(np.zeros(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.initialized = False

    def initialize(self, x: np.ndarray) -> bool:
        """Set bias/scale so ``inverse(x)`` has zero mean, unit variance per dimension.

        Only the first call has an effect; returns whether it did anything.
        """
        if self.initialized:
            return False
        x = np.asarray(x, dtype=np.float64)
        var = np.maximum(x.var(axis=0), self.VAR_FLOOR)
        self.bias.data = x.mean(axis=0)
        self.log_scale.data = 0.5 * np.log(var)
        self.initialized = True
        return True

    def forward(self, z):
        z = as_tensor(z)
        x = z * exp(self.log_scale) + self.bias
        return x, self.log_scale.sum() * _ones(z.shape[0])

    def inverse(self, x):
        x = as_tensor(x)
        z = (x - self.bias) * exp(-self.log_scale)
        return z, -self.log_scale.sum() * _ones(x.shape[0])


class MaskedAffineFlow(FlowLayer):
    """Coupling layer: masked-in dimensions pass through and condition scale/shift of the rest.

    ``x = m*z + (1-m)*(z*exp(s(m*z)) + t(m*z))`` with ``s = bound * tanh(raw_s)``;
    the output layers of both nets start at zero, so a fresh layer is the identity.
    """

    def __init__(self, dim: int, mask: np.ndarray, hidden: int, rng: np.random.Generator):
        self.dim = dim
        self.mask = np.asarray(mask, dtype=np.float64)
        if self.mask.shape != (dim,):
            raise ValueError("mask must have one entry per dimension")
        self.s_net = MLP(rng, [dim, hidden, hidden, dim], zero_last=True)
        self.t_net = MLP(rng, [dim, hidden, hidden, dim], zero_last=True)
        self.s_bound = Tensor(np.ones(dim), requires_grad=True)

    def _scale_shift(self, masked: Tensor) -> tuple[Tensor, Tensor]:
        keep = 1.0 - self.mask
        s = self.s_bound * tanh(self.s_net(masked)) * keep
        t = self.t_net(masked) * keep
        return s, t

    def forward(self, z):
        z = as_tensor(z)
        masked = z * self.mask
        s, t = self._scale_shift(masked)
        x = masked + (z * exp(s) + t) * (1.0 - self.mask)
        return x, s.sum(axis=1)

    def inverse(self, x):
        x = as_tensor(x)
        masked = x * self.mask
        s, t = self._scale_shift(masked)
        z = masked + ((x - t) * exp(-s)) * (1.0 - self.mask)
        return z, -s.sum(axis=1)


class LinearFlow(FlowLayer):
    """``x = W z + b`` with ``W`` kept invertible (``|det W| > 1e-12``)."""

    MIN_ABS_DET = 1e-12

    def __init__(self, dim: int, rng: np.random.Generator | None = None, weight=None, bias=None):
        self.dim = dim
        if weight is None:
            noise = 0.0 if rng is None else rng.normal(scale=0.01, size=(dim, dim))
            weight = np.eye(dim) + noise
        self.weight = Tensor(np.array(weight, dtype=np.float64), requires_grad=True)
        self.bias = Tensor(np.zeros(dim) if bias is None else np.array(bias, dtype=np.float64), requires_grad=True)
        self.check()

    def check(self) -> None:
        if abs(np.linalg.det(self.weight.data)) <= self.MIN_ABS_DET:
            raise SingularWeightError("LinearFlow weight is (numerically) singular")

    def forward(self, z):
        z = as_tensor(z)
        x = matmul(z, transpose(self.weight)) + self.bias
        return x, logabsdet(self.weight) * _ones(z.shape[0])

    def inverse(self, x):
        x = as_tensor(x)
        z = transpose(solve(self.weight, transpose(x - self.bias)))
        return z, -logabsdet(self.weight) * _ones(x.shape[0])


def alternating_mask(dim: int, parity: int) -> np.ndarray:
    """1 on even (parity 0) or odd (parity 1) dimensions."""
    return ((np.arange(dim) + parity) % 2 == 0).astype(np.float64)
