"""Objective intelligibility measures: ESTOI and SIIB (Gaussian-capacity form).

Both follow the reference/degraded convention used throughout the package:
the reference is the unmodified speech and the degraded signal is the
processed speech plus the masker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import Waveform
from .errors import MetricError, SignalError

EPS = np.finfo(np.float64).eps

ESTOI_FS = 10000
ESTOI_FRAME = 512
ESTOI_HOP = 256
ESTOI_SEGMENT = 30

SIIB_FS = 16000
SIIB_FRAME = 400
SIIB_HOP = 200
SIIB_FILTERS = 31
SIIB_F_LO = 100.0
SIIB_F_HI = 6500.0
SIIB_MIN_ACTIVE_S = 1.5

DEFAULT_R_MAX = 750.0
PRODUCTION_NOISE_R = 0.75

METRIC_ORDER = ("siib", "estoi")


@dataclass(frozen=True)
class MetricSelection:
    """Ordered set of enabled metrics; its length is the discriminator output width."""

    names: tuple[str, ...] = ("siib",)

    def __post_init__(self):
        names = tuple(self.names)
        unknown = [n for n in names if n not in METRIC_ORDER]
        if unknown:
            raise MetricError(f"unknown metric(s): {unknown}")
        if not names or len(set(names)) != len(names):
            raise MetricError(f"metric selection must be a non-empty set, got {names}")
        # canonical order so checkpoints and D outputs line up
        object.__setattr__(self, "names", tuple(n for n in METRIC_ORDER if n in names))

    @property
    def k(self) -> int:
        return len(self.names)

    @classmethod
    def parse(cls, spec) -> "MetricSelection":
        if isinstance(spec, MetricSelection):
            return spec
        if isinstance(spec, str):
            spec = [s.strip().lower() for s in spec.replace("+", ",").split(",") if s.strip()]
        return cls(tuple(spec))


@dataclass(frozen=True)
class MetricScores:
    estoi: float | None = None
    siib_raw: float | None = None
    siib_norm: float | None = None

    def vector(self, sel: MetricSelection) -> np.ndarray:
        values = {"siib": self.siib_norm, "estoi": self.estoi}
        out = [values[n] for n in sel.names]
        if any(v is None for v in out):
            raise MetricError(f"scores missing for selection {sel.names}")
        return np.array(out, dtype=np.float64)


def _check_pair(ref: Waveform, deg: Waveform):
    if len(ref) != len(deg):
        raise MetricError(f"length mismatch: reference {len(ref)} vs degraded {len(deg)}")
    if ref.sample_rate != deg.sample_rate:
        raise MetricError("reference and degraded sample rates differ")


def _normalize(x: np.ndarray, axis: int) -> np.ndarray:
    x = x - np.mean(x, axis=axis, keepdims=True)
    return x / (np.linalg.norm(x, axis=axis, keepdims=True) + EPS)


def estoi(ref: Waveform, deg: Waveform) -> float:
    _check_pair(ref, deg)
    x = dsp.resample(ref, ESTOI_FS)
    y = dsp.resample(deg, ESTOI_FS)
    try:
        x, y = dsp.remove_silent_frames(x, y)
    except SignalError as exc:
        raise MetricError(str(exc)) from exc
    if len(x) < ESTOI_FRAME:
        raise MetricError("signal too short")
    win = dsp.hann(ESTOI_FRAME)
    spec_x = np.fft.rfft(dsp._frame(x.samples, ESTOI_FRAME, ESTOI_HOP) * win, axis=1)
    spec_y = np.fft.rfft(dsp._frame(y.samples, ESTOI_FRAME, ESTOI_HOP) * win, axis=1)
    if spec_x.shape[0] < ESTOI_SEGMENT:
        raise MetricError("signal too short")
    env_x = dsp.third_octave_bands(spec_x, ESTOI_FS, ESTOI_FRAME).T
    env_y = dsp.third_octave_bands(spec_y, ESTOI_FS, ESTOI_FRAME).T
    # (segments, bands, frames)
    seg_x = np.lib.stride_tricks.sliding_window_view(env_x, ESTOI_SEGMENT, axis=1).transpose(1, 0, 2)
    seg_y = np.lib.stride_tricks.sliding_window_view(env_y, ESTOI_SEGMENT, axis=1).transpose(1, 0, 2)
    xn = _normalize(_normalize(seg_x, axis=2), axis=1)
    yn = _normalize(_normalize(seg_y, axis=2), axis=1)
    return float(np.mean(np.sum(xn * yn, axis=(1, 2)) / ESTOI_SEGMENT))


def _log_features(w: Waveform) -> np.ndarray:
    energies = dsp.gammatone_bank(
        w, SIIB_FILTERS, SIIB_F_LO, SIIB_F_HI, frame_len=SIIB_FRAME, hop=SIIB_HOP
    )
    floor = 1e-10 * np.max(energies) + 1e-300
    return np.log(energies + floor)


def siib(ref: Waveform, deg: Waveform, r: float = PRODUCTION_NOISE_R) -> float:
    """Speech intelligibility in bits per second, Gaussian-capacity estimate."""
    _check_pair(ref, deg)
    x = dsp.resample(ref, SIIB_FS)
    y = dsp.resample(deg, SIIB_FS)
    try:
        x, y = dsp.remove_silent_frames(x, y, frame=SIIB_FRAME, hop=SIIB_HOP)
    except SignalError as exc:
        raise MetricError(str(exc)) from exc
    if len(x) < SIIB_MIN_ACTIVE_S * SIIB_FS:
        raise MetricError("insufficient speech material")
    fx = _log_features(x)
    fy = _log_features(y)
    fx = fx - fx.mean(axis=0)
    fy = fy - fy.mean(axis=0)
    cov = fx.T @ fx / fx.shape[0]
    _, basis = np.linalg.eigh(cov)
    zx = fx @ basis
    zy = fy @ basis
    num = np.sum(zx * zy, axis=0)
    den = np.sqrt(np.sum(zx**2, axis=0) * np.sum(zy**2, axis=0))
    rho = np.where(den > 0, num / np.maximum(den, 1e-300), 0.0)
    info = -0.5 * np.log2(1.0 - (r * rho) ** 2)
    frame_rate = SIIB_FS / SIIB_HOP
    return float(max(np.sum(info) * frame_rate, 0.0))


def normalize_siib(raw: float, r_max: float = DEFAULT_R_MAX) -> float:
    if raw < 0:
        raise MetricError(f"SIIB must be non-negative, got {raw}")
    if r_max <= 0:
        raise MetricError("r_max must be positive")
    return float(min(max(raw / r_max, 0.0), 1.0))


def q_scores(
    processed: Waveform,
    unprocessed: Waveform,
    noise: Waveform,
    sel: MetricSelection | None = None,
    r_max: float = DEFAULT_R_MAX,
) -> MetricScores:
    """Score ``processed`` heard in ``noise`` against the unprocessed reference."""
    sel = sel or MetricSelection(METRIC_ORDER)
    if not (len(processed) == len(unprocessed) == len(noise)):
        raise MetricError(
            f"length mismatch: processed {len(processed)}, unprocessed {len(unprocessed)}, "
            f"noise {len(noise)}"
        )
    if len({processed.sample_rate, unprocessed.sample_rate, noise.sample_rate}) != 1:
        raise MetricError("sample rates differ")
    degraded = processed.with_samples(processed.samples + noise.samples)
    out = {}
    if "estoi" in sel.names:
        out["estoi"] = estoi(unprocessed, degraded)
    if "siib" in sel.names:
        raw = siib(unprocessed, degraded)
        out["siib_raw"] = raw
        out["siib_norm"] = normalize_siib(raw, r_max)
    return MetricScores(**out)
