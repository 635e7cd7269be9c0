"""Alternating WGAN-GP training, generation and checkpointing for MolGAN."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from molgen import checkpoint as ckpt
from molgen.chem import Molecule
from molgen.diff import Adam, ExponentialDecay, backward, no_grad
from molgen.graphs import featurize_batch, defeaturize, one_hot_argmax, GraphTensors
from molgen.metrics import uniqueness
from molgen.molgan.config import MolganConfig
from molgen.molgan.loss import wgan_gp_loss
from molgen.molgan.model import Discriminator, Generator, generate, sample_latent
from molgen.rng import RngStreams

log = logging.getLogger(__name__)


class EmptyDatasetError(ValueError):
    pass


class NaNLossError(RuntimeError):
    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass
class History:
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float | None] = field(default_factory=list)
    wasserstein: list[float] = field(default_factory=list)
    penalty: list[float] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.d_loss)

    @property
    def generator_updates(self) -> int:
        return sum(g is not None for g in self.g_loss)

    def to_dict(self) -> dict:
        return {
            "d_loss": self.d_loss,
            "g_loss": self.g_loss,
            "wasserstein": self.wasserstein,
            "penalty": self.penalty,
            "events": self.events,
        }


def is_generator_step(step: int, ratio: float) -> bool:
    """True on the steps where the running count ``floor(ratio * (step + 1))`` increments."""
    return math.floor((step + 1) * ratio + 1e-9) > math.floor(step * ratio + 1e-9)


class MolGAN:
    def __init__(self, config: MolganConfig, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        self.rngs = RngStreams(seed)
        init = self.rngs["init"]
        self.generator = Generator(config, init)
        self.discriminator = Discriminator(config, init)
        lr = config.learning_rate
        if config.lr_decay is not None:
            lr = ExponentialDecay(config.learning_rate, *config.lr_decay)
        self.g_opt = Adam(self.generator.parameters(), lr=lr, weight_decay=config.weight_decay)
        self.d_opt = Adam(self.discriminator.parameters(), lr=lr, weight_decay=config.weight_decay)
        self.step = 0
        self._epoch_order: np.ndarray | None = None
        self._epoch_pos = 0

    # ------------------------------------------------------------ sampling

    def sample(self, count: int, rng: np.random.Generator | None = None) -> GraphTensors:
        """Discrete graphs from ``count`` latents (batched one-hot arrays)."""
        rng = rng or self.rngs["eval"]
        cfg = self.config
        with no_grad():
            z = sample_latent(rng, count, cfg.latent_dim)
            X, A = generate(self.generator, z, cfg.sampling_mode, cfg.temperature, rng)
        return one_hot_argmax(X.data, A.data, cfg.spec)

    def predict(self, count: int, seed: int | None = None) -> list[Molecule]:
        rng = self.rngs["eval"] if seed is None else RngStreams(seed)["eval"]
        g = self.sample(count, rng)
        return [defeaturize(GraphTensors(x, a), self.config.spec) for x, a in zip(g.X, g.A)]

    # ------------------------------------------------------------ training

    def _next_batch(self, n_data: int) -> np.ndarray:
        bs = self.config.batch_size
        if self._epoch_order is None or self._epoch_pos >= n_data:
            self._epoch_order = self.rngs["shuffle"].permutation(n_data)
            self._epoch_pos = 0
        idx = self._epoch_order[self._epoch_pos : self._epoch_pos + bs]
        self._epoch_pos += bs
        return idx

    def train_step(self, X: np.ndarray, A: np.ndarray, history: History) -> None:
        cfg = self.config
        idx = self._next_batch(len(X))
        b = len(idx)
        real = (X[idx], A[idx])
        with no_grad():
            z = sample_latent(self.rngs["latent"], b, cfg.latent_dim)
            fake = generate(self.generator, z, cfg.sampling_mode, cfg.temperature, self.rngs["noise"])
        eps = self.rngs["interp"].random(b)
        training = cfg.dropout > 0
        loss = wgan_gp_loss(
            self.discriminator, real, fake, cfg.penalty_coefficient, eps,
            training=training, rng=self.rngs["dropout"],
        )
        d_val = float(loss.d_loss.data)
        if not math.isfinite(d_val):
            raise NaNLossError(f"non-finite discriminator loss at step {self.step}", self._diagnostics(history, d_val))
        self.discriminator.zero_grad()
        backward(loss.d_loss)
        self.d_opt.step()
        self.discriminator.zero_grad()

        g_val = None
        if is_generator_step(self.step, cfg.generator_steps_ratio):
            z = sample_latent(self.rngs["latent"], b, cfg.latent_dim)
            Xf, Af = generate(
                self.generator, z, cfg.sampling_mode, cfg.temperature, self.rngs["noise"],
                training=training, dropout_rng=self.rngs["dropout"],
            )
            g_loss = -self.discriminator(Xf, Af, training=training, rng=self.rngs["dropout"]).mean()
            g_val = float(g_loss.data)
            if not math.isfinite(g_val):
                raise NaNLossError(f"non-finite generator loss at step {self.step}", self._diagnostics(history, g_val))
            self.generator.zero_grad()
            backward(g_loss)
            self.g_opt.step()
            self.generator.zero_grad()
            self.discriminator.zero_grad()

        history.d_loss.append(d_val)
        history.g_loss.append(g_val)
        history.wasserstein.append(loss.wasserstein)
        history.penalty.append(loss.penalty)
        self.step += 1

    def _diagnostics(self, history: History, value: float) -> dict:
        norms = {
            f"generator/{k}": float(np.linalg.norm(p.data)) for k, p in self.generator.named_parameters()
        }
        norms.update(
            {f"discriminator/{k}": float(np.linalg.norm(p.data)) for k, p in self.discriminator.named_parameters()}
        )
        return {
            "step": self.step,
            "value": value,
            "last_d_losses": history.d_loss[-10:],
            "last_g_losses": [g for g in history.g_loss[-50:] if g is not None][-10:],
            "param_norms": norms,
        }

    def fit(
        self,
        X: np.ndarray,
        A: np.ndarray,
        steps: int,
        history: History | None = None,
        checkpoint_dir: str | Path | None = None,
        callback: Callable[["MolGAN", History], None] | None = None,
    ) -> History:
        if len(X) == 0:
            raise EmptyDatasetError("no training graphs")
        history = history or History()
        cfg = self.config
        target = self.step + steps
        while self.step < target:
            self.train_step(X, A, history)
            if cfg.min_uniqueness is not None and self.step % cfg.uniqueness_check_interval == 0:
                mols = self.predict(cfg.uniqueness_sample_size, seed=self.seed + self.step)
                uni = uniqueness(mols)
                history.events.append({"step": self.step, "uniqueness": uni})
                if uni < cfg.min_uniqueness:
                    log.info("early stop at step %d: uniqueness %.2f%% < %.2f%%", self.step, uni, cfg.min_uniqueness)
                    history.events.append({"step": self.step, "early_stop": True})
                    break
            if checkpoint_dir and cfg.checkpoint_interval and self.step % cfg.checkpoint_interval == 0:
                self.save(Path(checkpoint_dir) / f"molgan_step{self.step:07d}.npz")
            if callback is not None:
                callback(self, history)
            if self.step % 100 == 0:
                log.debug("step %d d_loss %.4f W %.4f", self.step, history.d_loss[-1], history.wasserstein[-1])
        return history

    # ------------------------------------------------------------ persistence

    def save(self, path) -> Path:
        arrays = {}
        arrays.update(ckpt.prefixed("generator", self.generator.state_dict()))
        arrays.update(ckpt.prefixed("discriminator", self.discriminator.state_dict()))
        arrays.update(ckpt.prefixed("generator_adam", self.g_opt.state_dict()))
        arrays.update(ckpt.prefixed("discriminator_adam", self.d_opt.state_dict()))
        if self._epoch_order is not None:
            arrays["epoch_order"] = self._epoch_order
        meta = {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "step": self.step,
            "epoch_pos": self._epoch_pos,
            "rng": self.rngs.get_state(),
        }
        return ckpt.save(path, "molgan", meta, arrays)

    @classmethod
    def load(cls, path) -> "MolGAN":
        meta, arrays = ckpt.load(path)
        if meta["model"] != "molgan":
            raise ckpt.CheckpointError(f"{path} holds a {meta['model']} model, not molgan")
        model = cls(MolganConfig.from_dict(meta["config"]), seed=meta["seed"])
        model.generator.load_state_dict(ckpt.group(arrays, "generator"))
        model.discriminator.load_state_dict(ckpt.group(arrays, "discriminator"))
        model.g_opt.load_state_dict(ckpt.group(arrays, "generator_adam"))
        model.d_opt.load_state_dict(ckpt.group(arrays, "discriminator_adam"))
        model.step = int(meta["step"])
        model._epoch_pos = int(meta["epoch_pos"])
        model._epoch_order = arrays.get("epoch_order")
        model.rngs.set_state(meta["rng"])
        return model


def as_graph_arrays(dataset, spec) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple) and len(dataset) == 2 and isinstance(dataset[0], np.ndarray):
        return dataset
    mols = getattr(dataset, "molecules", dataset)
    mols = list(mols)
    if not mols:
        raise EmptyDatasetError("dataset has no molecules")
    return featurize_batch(mols, spec)


def train(
    config: MolganConfig,
    dataset,
    epochs: int | None = None,
    seed: int = 0,
    steps: int | None = None,
    checkpoint_dir: str | Path | None = None,
) -> tuple[MolGAN, History]:
    """Train from scratch. ``epochs`` counts passes over the data; ``steps`` overrides it."""
    X, A = as_graph_arrays(dataset, config.spec)
    if len(X) == 0:
        raise EmptyDatasetError("dataset has no molecules")
    if steps is None:
        if epochs is None or epochs < 1:
            raise ValueError("epochs must be >= 1")
        steps = epochs * math.ceil(len(X) / config.batch_size)
    model = MolGAN(config, seed)
    history = model.fit(X, A, steps, checkpoint_dir=checkpoint_dir)
    return model, history


def predict_generator(model: MolGAN, count: int, seed: int | None = None) -> list[Molecule]:
    return model.predict(count, seed)
