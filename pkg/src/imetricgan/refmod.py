"""Rule-based reference modifier: spectral shaping followed by dynamic range compression.

Produces the enhanced examples the discriminator sees alongside generator
output.  Level and duration of the input are preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import Waveform
from .errors import ConfigError


@dataclass(frozen=True)
class ShapingProfile:
    boost_db: float = 12.0
    plateau_hz: tuple = (1000.0, 4000.0)
    rise_start_hz: float = 500.0
    fall_end_hz: float = 8000.0
    low_slope_db_per_octave: float = 6.0
    floor_db: float = -30.0
    attack_ms: float = 2.0
    release_ms: float = 50.0
    threshold_dbfs: float = -20.0
    ratio: float = 2.0

    def __post_init__(self):
        values = (self.boost_db, self.low_slope_db_per_octave, self.floor_db, self.threshold_dbfs)
        if not all(np.isfinite(v) for v in values):
            raise ConfigError("shaping gains must be finite")
        if self.attack_ms <= 0 or self.release_ms <= 0:
            raise ConfigError("attack and release times must be positive")
        if self.ratio < 1.0:
            raise ConfigError("compression ratio below 1 would make the static curve expand")
        lo, hi = self.plateau_hz
        if not 0 < self.rise_start_hz < lo < hi < self.fall_end_hz:
            raise ConfigError("need 0 < rise_start < plateau_lo < plateau_hi < fall_end")

    def knee_points(self):
        """Static curve as (input dB, output dB) pairs; monotone non-decreasing."""
        t = self.threshold_dbfs
        return [(-120.0, -120.0), (t, t), (0.0, t + (0.0 - t) / self.ratio)]


def shaping_gain_db(freqs, profile: ShapingProfile = ShapingProfile()) -> np.ndarray:
    f = np.asarray(freqs, dtype=np.float64)
    lo, hi = profile.plateau_hz
    g = np.zeros_like(f)
    rise = (f >= profile.rise_start_hz) & (f < lo)
    g[rise] = profile.boost_db * 0.5 * (1 - np.cos(np.pi * (f[rise] - profile.rise_start_hz) / (lo - profile.rise_start_hz)))
    g[(f >= lo) & (f <= hi)] = profile.boost_db
    fall = (f > hi) & (f < profile.fall_end_hz)
    g[fall] = profile.boost_db * 0.5 * (1 + np.cos(np.pi * (f[fall] - hi) / (profile.fall_end_hz - hi)))
    low = f < profile.rise_start_hz
    with np.errstate(divide="ignore"):
        octaves = np.log2(np.maximum(f[low], 1e-9) / profile.rise_start_hz)
    g[low] = np.maximum(profile.low_slope_db_per_octave * octaves, profile.floor_db)
    return g


def spectral_shape(w: Waveform, profile: ShapingProfile = ShapingProfile()) -> Waveform:
    spec = dsp.stft(w)
    freqs = np.fft.rfftfreq(dsp.WIN_LEN, 1.0 / w.sample_rate)
    gain = 10.0 ** (shaping_gain_db(freqs, profile) / 20.0)
    return dsp.istft(dsp.ComplexSpectrogram(spec.bins * gain, w.sample_rate, length=len(w)))


def static_gain_db(level_db, profile: ShapingProfile = ShapingProfile()) -> np.ndarray:
    """Gain of the static curve; 0 dB below threshold, ratio:1 above."""
    over = np.maximum(np.asarray(level_db, dtype=np.float64) - profile.threshold_dbfs, 0.0)
    return -over * (1.0 - 1.0 / profile.ratio)


def envelope(x: np.ndarray, fs: int, profile: ShapingProfile = ShapingProfile()) -> np.ndarray:
    """Peak envelope follower with separate attack and release time constants."""
    a_att = np.exp(-1.0 / (profile.attack_ms * 1e-3 * fs))
    a_rel = np.exp(-1.0 / (profile.release_ms * 1e-3 * fs))
    rect = np.abs(x)
    env = np.empty_like(rect)
    e = 0.0
    for n, v in enumerate(rect.tolist()):
        a = a_att if v > e else a_rel
        e = a * e + (1.0 - a) * v
        env[n] = e
    return env


def drc_gain(w: Waveform, profile: ShapingProfile = ShapingProfile()) -> np.ndarray:
    """Per-sample linear gain the compressor applies (before renormalization)."""
    env = envelope(w.samples, w.sample_rate, profile)
    level = 20.0 * np.log10(np.maximum(env, 1e-10))
    return 10.0 ** (static_gain_db(level, profile) / 20.0)


def drc(w: Waveform, profile: ShapingProfile = ShapingProfile()) -> Waveform:
    y = w.samples * drc_gain(w, profile)
    level = dsp.rms(w)
    out_level = dsp.rms(y)
    if out_level > 0:
        y = y * (level / out_level)
    return w.with_samples(np.clip(y, -1.0, 1.0))


def make_example(s: Waveform, profile: ShapingProfile = ShapingProfile()) -> Waveform:
    """Enhanced example: shaped, compressed, then matched to the input RMS."""
    y = drc(spectral_shape(s, profile), profile)
    level = dsp.rms(y)
    target = dsp.rms(s)
    return y.with_samples(y.samples * (target / level) if level > 0 else y.samples)
