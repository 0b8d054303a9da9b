"""Run configuration: model variant, metric selection, optimisation and paths."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .dsp import HOP, POWER_LAW_P, WIN_LEN
from .errors import ConfigError
from .metrics import DEFAULT_R_MAX, MetricSelection

# variant -> (metric selection, discriminator loss)
VARIANTS = {
    "SiibGAN-zs": (("siib",), "zero_knowledge"),
    "SiibGAN": (("siib",), "with_examples"),
    "MultiGAN": (("siib", "estoi"), "with_examples"),
}


@dataclass(frozen=True)
class VariantConfig:
    variant: str
    selection: MetricSelection
    loss: str

    @property
    def uses_examples(self) -> bool:
        return self.loss == "with_examples"

    @classmethod
    def from_name(cls, name: str, metrics=None) -> "VariantConfig":
        if name not in VARIANTS:
            raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
        names, loss = VARIANTS[name]
        sel = MetricSelection.parse(metrics) if metrics else MetricSelection(names)
        return cls(name, sel, loss)


@dataclass
class RunConfig:
    variant: str = "MultiGAN"
    metrics: list | None = None
    r_max: float = DEFAULT_R_MAX
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    epochs: int = 50
    patience: int = 5
    seed: int = 0
    architecture: str | dict = "paper"
    mask_domain: str = "compressed"
    power_law_p: float = POWER_LAW_P
    stft: dict = field(default_factory=lambda: {"window_len": WIN_LEN, "hop": HOP})
    target: float = 1.0
    checkpoint_every: int = 1
    snr_grid: list = field(default_factory=lambda: [-5.0, 0.0, 5.0])
    with_examples: bool = True
    heldout_fraction: float = 0.2
    test_fraction: float = 0.0
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        VariantConfig.from_name(self.variant, self.metrics)
        if self.stft != {"window_len": WIN_LEN, "hop": HOP}:
            raise ConfigError(f"STFT is fixed at window_len={WIN_LEN}, hop={HOP}; got {self.stft}")
        if self.mask_domain not in ("compressed", "linear"):
            raise ConfigError("mask_domain must be 'compressed' or 'linear'")
        if self.r_max <= 0 or self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("r_max and learning rates must be positive")
        if self.epochs < 1 or self.patience < 1 or self.checkpoint_every < 1:
            raise ConfigError("epochs, patience and checkpoint_every must be >= 1")
        if self.heldout_fraction < 0 or self.test_fraction < 0 or self.heldout_fraction + self.test_fraction >= 1:
            raise ConfigError("heldout_fraction and test_fraction must be >= 0 and sum to less than 1")
        if self.power_law_p != POWER_LAW_P:
            raise ConfigError(f"power-law exponent is fixed at {POWER_LAW_P}")

    @property
    def variant_config(self) -> VariantConfig:
        return VariantConfig.from_name(self.variant, self.metrics)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)
