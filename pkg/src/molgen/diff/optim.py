from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from molgen.diff.tensor import ShapeMismatchError, Tensor


@dataclass(frozen=True)
class ExponentialDecay:
    """``rate(t) = initial_rate * decay_rate ** (t / decay_steps)`` (smooth, not staircase)."""

    initial_rate: float
    decay_rate: float
    decay_steps: int

    def __post_init__(self):
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay_rate must be in (0, 1]")
        if self.decay_steps <= 0:
            raise ValueError("decay_steps must be positive")
        if self.initial_rate <= 0:
            raise ValueError("initial_rate must be positive")

    def __call__(self, step: int) -> float:
        return self.initial_rate * self.decay_rate ** (step / self.decay_steps)


class Adam:
    """Adam with bias correction and decoupled weight decay.

    Decay is applied as ``p -= lr * weight_decay * p`` before the moment update.
    ``lr`` may be a float or a callable of the step count (e.g. :class:`ExponentialDecay`).
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params: list[Tensor] = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self) -> float:
        return self.lr(self.step_count) if callable(self.lr) else float(self.lr)

    def step(self, grads=None) -> None:
        """Update in place using ``grads`` (list of arrays) or each parameter's ``.grad``."""
        if grads is None:
            grads = [p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise ShapeMismatchError("one gradient per parameter required")
        lr = self.current_lr()
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for k, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeMismatchError(f"grad shape {g.shape} != param shape {p.data.shape}")
            if self.weight_decay:
                p.data = p.data - lr * self.weight_decay * p.data
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"step": np.array(self.step_count)}
        for k in range(len(self.params)):
            out[f"m.{k}"] = self.m[k].copy()
            out[f"v.{k}"] = self.v[k].copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(state["step"])
        self.m = [np.array(state[f"m.{k}"]) for k in range(len(self.params))]
        self.v = [np.array(state[f"v.{k}"]) for k in range(len(self.params))]
