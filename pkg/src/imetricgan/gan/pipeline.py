"""Spectral front end, mask application with energy normalization, and enhance()."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import dsp
from ..dsp import ComplexSpectrogram, MagSpectrogram, Waveform
from ..errors import ShapeError, SignalError
from ..neural import autograd as ag

logger = logging.getLogger(__name__)

MASK_DOMAINS = ("compressed", "linear")


@dataclass
class Features:
    """Spectral views of one (speech, noise) pair shared by G, D and reconstruction."""

    speech_spec: ComplexSpectrogram
    speech_c: np.ndarray
    noise_c: np.ndarray
    p: float = dsp.POWER_LAW_P

    @property
    def energy(self) -> float:
        return float(np.sum(np.power(self.speech_c.astype(np.float64), 2.0 / self.p)))


def compressed_mag(w: Waveform, p: float = dsp.POWER_LAW_P) -> np.ndarray:
    return dsp.compress(dsp.stft(w).magnitude(), p).mags


def extract_features(speech: Waveform, noise: Waveform, p: float = dsp.POWER_LAW_P) -> Features:
    if len(speech) != len(noise) or speech.sample_rate != noise.sample_rate:
        raise SignalError("speech and noise must have equal length and sample rate")
    spec = dsp.stft(speech)
    sc = dsp.compress(spec.magnitude(), p).mags
    nc = compressed_mag(noise, p)
    return Features(spec, sc, nc, p)


def apply_mask(mask: ag.Tensor, speech_c, p=dsp.POWER_LAW_P, domain="compressed"):
    """Apply the scale factors and renormalise energy.

    Returns ``(processed_c, linear_mags)``: the energy-normalised spectrogram
    in the compressed domain as a graph tensor (the discriminator's input),
    and the same spectrogram as plain linear magnitudes for resynthesis.
    """
    if domain not in MASK_DOMAINS:
        raise ValueError(f"mask domain must be one of {MASK_DOMAINS}")
    speech_c = np.asarray(speech_c)
    if mask.shape != speech_c.shape:
        raise ShapeError(f"mask {mask.shape} does not match spectrogram {speech_c.shape}")
    sc = ag.Tensor(speech_c.astype(mask.dtype))
    e_ref = float(np.sum(np.power(speech_c.astype(np.float64), 2.0 / p)))
    if e_ref <= 0.0:
        raise SignalError("reference spectrogram has zero energy")
    # linear magnitude = (mask^a * sc)^(1/p); a = 1 compressed, a = p linear
    modified_c = mask * sc if domain == "compressed" else ag.power(mask, p) * sc
    e_mod = ag.tsum(ag.power(modified_c, 2.0 / p))
    if float(e_mod.data) <= 0.0:
        raise SignalError("degenerate enhancement")
    gain = ag.power(e_mod * (1.0 / e_ref), -0.5)
    processed_c = modified_c * ag.power(gain, p)
    linear = float(gain.data) * np.power(modified_c.data.astype(np.float64), 1.0 / p)
    return processed_c, linear


def generator_forward(G, speech_spec: MagSpectrogram, noise_spec: MagSpectrogram, domain="compressed"):
    """Run G on compressed spectrograms.

    Returns ``(mask, enhanced)`` where ``enhanced`` is the linear,
    energy-normalised magnitude spectrogram.
    """
    if not (speech_spec.compressed and noise_spec.compressed):
        raise SignalError("generator inputs must be power-law compressed")
    if speech_spec.shape != noise_spec.shape:
        raise ShapeError(f"speech {speech_spec.shape} and noise {noise_spec.shape} differ")
    with ag.no_grad():
        mask = G(speech_spec.mags, noise_spec.mags)
        _, linear = apply_mask(mask, speech_spec.mags, speech_spec.p, domain)
    return mask.data, MagSpectrogram(linear)


def reconstruct(linear_mags: np.ndarray, speech_spec: ComplexSpectrogram, target_rms: float) -> Waveform:
    """Resynthesise with the speech phase and pin the waveform RMS to ``target_rms``."""
    out = dsp.recombine(MagSpectrogram(np.asarray(linear_mags, dtype=np.float64)), speech_spec)
    level = dsp.rms(out)
    if level <= 0.0:
        raise SignalError("degenerate enhancement")
    return out.with_samples(out.samples * (target_rms / level))


def enhance(speech: Waveform, noise: Waveform, G, domain="compressed") -> Waveform:
    """Modify ``speech`` for playback in ``noise``; duration and RMS are preserved."""
    feats = extract_features(speech, noise)
    mask, enhanced = generator_forward(
        G, MagSpectrogram(feats.speech_c, compressed=True), MagSpectrogram(feats.noise_c, compressed=True), domain
    )
    out = reconstruct(enhanced.mags, feats.speech_spec, dsp.rms(speech))
    assert len(out) == len(speech)
    return out
