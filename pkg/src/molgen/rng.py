"""Seeded random streams.

One ``SeedSequence`` per run is split into named child streams, each driving a
counter-based Philox generator, so that adding draws to one stream never shifts
another.
"""
from __future__ import annotations

import numpy as np

STREAMS = ("init", "latent", "noise", "interp", "shuffle", "dropout", "eval")


class RngStreams:
    def __init__(self, seed: int, names=STREAMS):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(len(names))
        self._gens = {
            name: np.random.Generator(np.random.Philox(child)) for name, child in zip(names, children)
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._gens[name]

    def get_state(self) -> dict:
        return {name: g.bit_generator.state for name, g in self._gens.items()}

    def set_state(self, state: dict) -> None:
        for name, st in state.items():
            self._gens[name].bit_generator.state = st


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
