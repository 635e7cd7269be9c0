from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from molgen import checkpoint as ckpt
from molgen.chem import Molecule
from molgen.diff import Adam, Tensor, as_tensor, backward, no_grad
from molgen.diff.nn import Module
from molgen.nflow.layers import ActNorm, FlowLayer, LinearFlow, MaskedAffineFlow, alternating_mask
from molgen.rng import RngStreams
from molgen import selfies

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class NonFiniteInputError(ValueError):
    pass


class NaNLossError(RuntimeError):
    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


class FlowModel(Module):
    """Layers listed in sampling order (base -> data) over a diagonal standard normal."""

    def __init__(self, dim: int, layers: list[FlowLayer] | None = None):
        self.dim = dim
        self.layers = list(layers or [])

    def forward(self, z) -> tuple[Tensor, Tensor]:
        z = as_tensor(z)
        total = Tensor(np.zeros(z.shape[0]))
        for layer in self.layers:
            z, ld = layer.forward(z)
            total = total + ld
        return z, total

    def inverse(self, x) -> tuple[Tensor, Tensor]:
        x = as_tensor(x)
        total = Tensor(np.zeros(x.shape[0]))
        for layer in reversed(self.layers):
            x, ld = layer.inverse(x)
            total = total + ld
        return x, total

    def base_log_prob(self, z: Tensor) -> Tensor:
        return (z * z).sum(axis=1) * -0.5 - 0.5 * self.dim * LOG_2PI

    def log_prob(self, x) -> Tensor:
        """Exact log density of each row of ``x`` (shape (batch, dim) or (dim,))."""
        x = as_tensor(x)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {x.shape[1]}")
        if not np.all(np.isfinite(x.data)):
            raise NonFiniteInputError("log_prob input contains NaN or inf")
        z, logdet = self.inverse(x)
        return self.base_log_prob(z) + logdet

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((count, self.dim))
        with no_grad():
            x, _ = self.forward(z)
        return x.data

    def initialize(self, batch: np.ndarray) -> None:
        """Data-dependent init of every ActNorm, walking from the data side inward."""
        x = Tensor(np.asarray(batch, dtype=np.float64))
        with no_grad():
            for layer in reversed(self.layers):
                if isinstance(layer, ActNorm):
                    layer.initialize(x.data)
                x, _ = layer.inverse(x)

    @property
    def needs_init(self) -> bool:
        return any(isinstance(l, ActNorm) and not l.initialized for l in self.layers)

    def check(self) -> None:
        for layer in self.layers:
            if isinstance(layer, LinearFlow):
                layer.check()

    def extra_state(self) -> dict:
        return {"actnorm_initialized": [getattr(l, "initialized", None) for l in self.layers]}

    def load_extra_state(self, state: dict) -> None:
        for layer, flag in zip(self.layers, state["actnorm_initialized"]):
            if isinstance(layer, ActNorm):
                layer.initialized = bool(flag)


def dequantize(indices, rng: np.random.Generator) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.float64)
    return idx + rng.random(idx.shape)


def quantize(values, vocab_size: int) -> np.ndarray:
    return np.clip(np.floor(np.asarray(values, dtype=np.float64)), 0, vocab_size - 1).astype(np.int64)


@dataclass
class FlowConfig:
    n_affine: int = 2
    hidden: int = 64
    use_actnorm: bool = True
    use_linear: bool = False
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 1024
    epochs: int = 100
    elements: tuple[str, ...] = selfies.DEFAULT_ELEMENTS
    fixed_length: int | None = None  # None: longest encoded training sequence

    def __post_init__(self):
        self.elements = tuple(self.elements)
        if self.n_affine < 0 or self.hidden < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("n_affine >= 0, hidden/batch_size/epochs >= 1 required")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be > 0 and weight_decay >= 0")
        if self.fixed_length is not None and self.fixed_length < 1:
            raise ValueError("fixed_length must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["elements"] = list(self.elements)
        return d


def build_flow(dim: int, config: FlowConfig, rng: np.random.Generator) -> FlowModel:
    """Sampling order: [linear], masked affine (even, odd, ...), ActNorm on the data side."""
    layers: list[FlowLayer] = []
    if config.use_linear:
        layers.append(LinearFlow(dim, rng))
    for k in range(config.n_affine):
        layers.append(MaskedAffineFlow(dim, alternating_mask(dim, k % 2), config.hidden, rng))
    if config.use_actnorm:
        layers.append(ActNorm(dim))
    return FlowModel(dim, layers)


@dataclass
class FlowHistory:
    nll: list[float] = field(default_factory=list)  # mean per epoch
    batch_nll: list[float] = field(default_factory=list)


def train_flow(
    model: FlowModel,
    data: np.ndarray,
    config: FlowConfig,
    rngs: RngStreams,
    optimizer: Adam | None = None,
    dequantize_data: bool = True,
    history: FlowHistory | None = None,
) -> FlowHistory:
    """Minimise mean negative log-likelihood with Adam; fresh dequantization noise every epoch."""
    data = np.asarray(data, dtype=np.float64)
    if len(data) == 0:
        raise ValueError("empty training data")
    history = history or FlowHistory()
    optimizer = optimizer or Adam(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    noise, shuffle = rngs["noise"], rngs["shuffle"]

    def prepare(rows):
        return dequantize(rows, noise) if dequantize_data else rows

    if model.needs_init:  # a resumed model must not consume extra randomness
        model.initialize(prepare(data[shuffle.permutation(len(data))[: config.batch_size]]))
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(data))
        losses, weights = [], []
        for start in range(0, len(data), config.batch_size):
            batch = prepare(data[order[start : start + config.batch_size]])
            loss = -model.log_prob(batch).mean()
            val = float(loss.data)
            if not math.isfinite(val):
                raise NaNLossError(
                    f"non-finite NLL in epoch {epoch}",
                    {"epoch": epoch, "batch_start": start, "value": val, "history": history.nll},
                )
            model.zero_grad()
            backward(loss)
            optimizer.step()
            model.zero_grad()
            model.check()
            losses.append(val)
            weights.append(len(batch))
            history.batch_nll.append(val)
        history.nll.append(float(np.average(losses, weights=weights)))
        log.debug("epoch %d nll %.4f", epoch, history.nll[-1])
    return history


class SelfiesFlow:
    """Flow over dequantized token-index vectors plus the token codec around it."""

    def __init__(self, config: FlowConfig, fixed_length: int, seed: int = 0):
        self.config = config
        self.fixed_length = fixed_length
        self.seed = int(seed)
        self.rngs = RngStreams(seed)
        self.vocab = selfies.vocabulary(config.elements)
        self.flow = build_flow(fixed_length, config, self.rngs["init"])
        self.optimizer = Adam(self.flow.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
        self.history = FlowHistory()

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def encode_dataset(self, molecules) -> np.ndarray:
        rows = []
        for m in molecules:
            toks = selfies.encode_padded(m, self.fixed_length, self.config.elements)
            rows.append(selfies.tokens_to_indices(toks, self.config.elements))
        return np.array(rows, dtype=np.int64)

    def fit(self, molecules) -> FlowHistory:
        data = self.encode_dataset(molecules)
        return train_flow(self.flow, data, self.config, self.rngs, self.optimizer, history=self.history)

    def sample_indices(self, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng or self.rngs["eval"]
        return quantize(self.flow.sample(count, rng), self.vocab_size)

    def generate_molecules(self, count: int, seed: int | None = None) -> list[Molecule]:
        rng = self.rngs["eval"] if seed is None else RngStreams(seed)["eval"]
        out = []
        for row in self.sample_indices(count, rng):
            toks = selfies.indices_to_tokens(row, self.config.elements)
            out.append(selfies.decode(toks, self.config.elements))
        return out

    def generate_tokens(self, count: int, seed: int | None = None) -> list[list[selfies.Token]]:
        rng = self.rngs["eval"] if seed is None else RngStreams(seed)["eval"]
        return [selfies.indices_to_tokens(r, self.config.elements) for r in self.sample_indices(count, rng)]

    def save(self, path) -> Path:
        arrays = ckpt.prefixed("flow", self.flow.state_dict())
        arrays.update(ckpt.prefixed("flow_adam", self.optimizer.state_dict()))
        meta = {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "step": self.optimizer.step_count,
            "fixed_length": self.fixed_length,
            "flow_state": self.flow.extra_state(),
            "history": {"nll": self.history.nll},
            "rng": self.rngs.get_state(),
        }
        return ckpt.save(path, "nflow", meta, arrays)

    @classmethod
    def load(cls, path) -> "SelfiesFlow":
        meta, arrays = ckpt.load(path)
        if meta["model"] != "nflow":
            raise ckpt.CheckpointError(f"{path} holds a {meta['model']} model, not nflow")
        model = cls(FlowConfig(**meta["config"]), meta["fixed_length"], seed=meta["seed"])
        model.flow.load_state_dict(ckpt.group(arrays, "flow"))
        model.optimizer.load_state_dict(ckpt.group(arrays, "flow_adam"))
        model.flow.load_extra_state(meta["flow_state"])
        model.history.nll = list(meta["history"]["nll"])
        model.rngs.set_state(meta["rng"])
        return model


def longest_encoding(molecules, elements=selfies.DEFAULT_ELEMENTS) -> int:
    return max(len(selfies.encode(m, elements)) for m in molecules)


def train_selfies_flow(molecules, config: FlowConfig, seed: int = 0) -> tuple[SelfiesFlow, FlowHistory]:
    molecules = list(molecules)
    length = config.fixed_length or longest_encoding(molecules, config.elements)
    model = SelfiesFlow(config, length, seed)
    history = model.fit(molecules)
    return model, history
