"""Generator and discriminator networks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..dsp import N_BINS
from ..errors import ConfigError, ShapeError
from ..neural import autograd as ag
from ..neural.layers import BiLSTM, Conv2d, Dense, Module, global_avg_pool


@dataclass(frozen=True)
class Architecture:
    """Layer sizes for G and D.  Defaults reproduce the published network."""

    n_bins: int = N_BINS
    g_lstm_hidden: int = 400
    g_lstm_layers: int = 2
    g_dense: int = 600
    d_filters: tuple = (8, 16, 32, 48, 64)
    d_kernels: tuple = ((5, 5), (7, 7), (10, 10), (15, 15), (20, 20))
    d_dense: tuple = (64, 10)
    d_freq_stride: int = 1
    n_metrics: int = 1
    leaky_slope: float = 0.3
    sn_method: str = "power"

    def __post_init__(self):
        object.__setattr__(self, "d_filters", tuple(int(f) for f in self.d_filters))
        object.__setattr__(self, "d_kernels", tuple(tuple(int(v) for v in k) for k in self.d_kernels))
        object.__setattr__(self, "d_dense", tuple(int(d) for d in self.d_dense))
        if len(self.d_filters) != len(self.d_kernels):
            raise ConfigError("d_filters and d_kernels must have the same length")
        if self.n_metrics not in (1, 2):
            raise ConfigError(f"discriminator output width must be 1 or 2, got {self.n_metrics}")
        if self.d_freq_stride not in (1, 2):
            raise ConfigError("d_freq_stride must be 1 or 2")
        if self.sn_method not in ("power", "svd"):
            raise ConfigError("sn_method must be 'power' or 'svd'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["d_filters"] = list(self.d_filters)
        d["d_kernels"] = [list(k) for k in self.d_kernels]
        d["d_dense"] = list(self.d_dense)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def preset(cls, name: str, n_metrics: int = 1) -> "Architecture":
        if name == "paper":
            return cls(n_metrics=n_metrics)
        if name == "desk":
            return cls(**DESK_PRESET, n_metrics=n_metrics)
        raise ConfigError(f"unknown architecture preset {name!r} (paper, desk)")

    # closed-form parameter counts -------------------------------------------------
    def generator_param_count(self) -> int:
        h = self.g_lstm_hidden
        total, n_in = 0, 2 * self.n_bins
        for _ in range(self.g_lstm_layers):
            total += 2 * (n_in * 4 * h + h * 4 * h + 4 * h)
            n_in = 2 * h
        total += n_in * self.g_dense + self.g_dense
        total += self.g_dense * self.n_bins + self.n_bins
        return total

    def discriminator_param_count(self) -> int:
        total, c_in = 0, 3
        for c_out, (kf, kt) in zip(self.d_filters, self.d_kernels):
            total += c_out * c_in * kf * kt + c_out
            c_in = c_out
        for width in (*self.d_dense, self.n_metrics):
            total += c_in * width + width
            c_in = width
        return total


# reduced sizes for single-core desk-scale training; stored in every checkpoint
DESK_PRESET = dict(
    g_lstm_hidden=48,
    g_dense=96,
    d_filters=(8, 8, 16, 16, 16),
    d_kernels=((5, 5), (5, 5), (7, 7), (7, 7), (9, 9)),
    d_dense=(32, 10),
    d_freq_stride=2,
    sn_method="svd",
)


class Generator(Module):
    """BLSTM stack -> dense (LeakyReLU) -> dense -> bounded scale factors per T-F bin."""

    def __init__(self, arch: Architecture, rng, dtype=np.float32):
        super().__init__()
        self.arch = arch
        n_in = 2 * arch.n_bins
        self.blstms = []
        for i in range(arch.g_lstm_layers):
            self.blstms.append(self.add_child(f"blstm{i + 1}", BiLSTM(n_in, arch.g_lstm_hidden, rng, dtype=dtype)))
            n_in = 2 * arch.g_lstm_hidden
        self.dense1 = self.add_child("dense1", Dense(n_in, arch.g_dense, rng, dtype=dtype))
        self.dense_out = self.add_child("dense_out", Dense(arch.g_dense, arch.n_bins, rng, dtype=dtype))
        self.dtype = dtype

    def forward(self, speech_c, noise_c) -> ag.Tensor:
        """Scale-factor mask (frames, bins) from compressed speech and noise magnitudes."""
        speech_c = np.asarray(speech_c)
        noise_c = np.asarray(noise_c)
        if speech_c.shape != noise_c.shape or speech_c.ndim != 2:
            raise ShapeError(f"speech {speech_c.shape} and noise {noise_c.shape} features must match")
        if speech_c.shape[1] != self.arch.n_bins:
            raise ShapeError(f"generator input width must be {2 * self.arch.n_bins}")
        h = ag.Tensor(np.concatenate([speech_c, noise_c], axis=1).astype(self.dtype))
        for blstm in self.blstms:
            h = blstm(h)
        h = ag.leaky_relu(self.dense1(h), self.arch.leaky_slope)
        return ag.scale_activation(self.dense_out(h))


class Discriminator(Module):
    """Spectrally normalised CNN predicting K normalised metric scores in (0, 1)."""

    def __init__(self, arch: Architecture, rng, dtype=np.float32):
        super().__init__()
        self.arch = arch
        self.convs = []
        c_in = 3
        for i, (c_out, kernel) in enumerate(zip(arch.d_filters, arch.d_kernels)):
            conv = Conv2d(c_in, c_out, kernel, rng, stride=(arch.d_freq_stride, 1), spectral_norm=True,
                          dtype=dtype, sn_method=arch.sn_method)
            self.convs.append(self.add_child(f"conv{i + 1}", conv))
            c_in = c_out
        self.denses = []
        for i, width in enumerate(arch.d_dense):
            dense = Dense(c_in, width, rng, spectral_norm=True, dtype=dtype, sn_method=arch.sn_method)
            self.denses.append(self.add_child(f"dense{i + 1}", dense))
            c_in = width
        self.out = self.add_child("out", Dense(c_in, arch.n_metrics, rng, spectral_norm=True, dtype=dtype,
                                                 sn_method=arch.sn_method))
        self.dtype = dtype

    def sn_layers(self):
        return [*self.convs, *self.denses, self.out]

    def forward(self, processed_c, unprocessed_c, noise_c) -> ag.Tensor:
        """Inputs are (frames, bins) compressed magnitudes; returns (K,) scores."""
        chans = []
        for x in (processed_c, unprocessed_c, noise_c):
            x = ag.as_tensor(x if isinstance(x, ag.Tensor) else np.asarray(x, dtype=self.dtype), self.dtype)
            if x.ndim != 2 or x.shape[1] != self.arch.n_bins:
                raise ShapeError(f"discriminator channels must be (frames, {self.arch.n_bins}), got {x.shape}")
            chans.append(ag.reshape(ag.transpose(x), (1, x.shape[1], x.shape[0])))
        if len({c.shape for c in chans}) != 1:
            raise ShapeError("discriminator channels differ in shape")
        h = ag.concat(chans, axis=0)
        for conv in self.convs:
            h = ag.leaky_relu(conv(h), self.arch.leaky_slope)
        h = global_avg_pool(h)
        for dense in self.denses:
            h = ag.leaky_relu(dense(h), self.arch.leaky_slope)
        return ag.sigmoid(self.out(h))
