from __future__ import annotations

from dataclasses import asdict, dataclass, field

from molgen.graphs import GraphSpec

SAMPLING_MODES = ("gumbel", "straight_through", "softmax")


@dataclass
class MolganConfig:
    spec: GraphSpec = field(default_factory=GraphSpec)
    latent_dim: int = 32
    generator_hidden: tuple[int, ...] = (128, 256, 512)
    conv_widths: tuple[int, ...] = (64, 32)
    aggregation_width: int = 128
    discriminator_hidden: tuple[int, ...] = (64,)
    penalty_coefficient: float = 10.0
    sampling_mode: str = "gumbel"
    temperature: float = 1.0
    generator_steps_ratio: float = 0.2
    batch_size: int = 32
    dropout: float = 0.0
    learning_rate: float = 1e-4
    lr_decay: tuple[float, int] | None = None  # (decay_rate, decay_steps) on top of learning_rate
    weight_decay: float = 0.0
    # early stopping on uniqueness is opt-in: None disables it
    min_uniqueness: float | None = None
    uniqueness_check_interval: int = 500
    uniqueness_sample_size: int = 256
    checkpoint_interval: int = 0

    def __post_init__(self):
        if isinstance(self.spec, dict):
            spec = dict(self.spec)
            if "elements" in spec:
                spec["elements"] = tuple(spec["elements"])
            self.spec = GraphSpec(**spec)
        self.generator_hidden = tuple(self.generator_hidden)
        self.conv_widths = tuple(self.conv_widths)
        self.discriminator_hidden = tuple(self.discriminator_hidden)
        if self.lr_decay is not None:
            self.lr_decay = (float(self.lr_decay[0]), int(self.lr_decay[1]))
        self.validate()

    def validate(self) -> None:
        widths = (
            [self.latent_dim, self.aggregation_width, self.batch_size]
            + list(self.generator_hidden)
            + list(self.conv_widths)
            + list(self.discriminator_hidden)
        )
        if any(int(w) < 1 for w in widths):
            raise ValueError("latent_dim/batch_size/all layer widths must be >= 1")
        if not self.conv_widths:
            raise ValueError("conv_widths: need at least one graph convolution layer")
        if self.penalty_coefficient < 0:
            raise ValueError("penalty_coefficient must be >= 0")
        if self.sampling_mode not in SAMPLING_MODES:
            raise ValueError(f"sampling_mode must be one of {SAMPLING_MODES}, got {self.sampling_mode!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not 0 < self.generator_steps_ratio <= 1:
            raise ValueError("generator_steps_ratio must be in (0, 1]")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec"]["elements"] = list(self.spec.elements)
        for k in ("generator_hidden", "conv_widths", "discriminator_hidden"):
            d[k] = list(d[k])
        if self.lr_decay is not None:
            d["lr_decay"] = list(self.lr_decay)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MolganConfig":
        return cls(**d)
