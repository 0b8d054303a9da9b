"""Hermetic toy corpus: vowel-like tone complexes as speech, shaped noise as masker.

Nothing here pretends to be real speech.  The signals only need the
properties the metrics and the model care about: a harmonic source with a
moving pitch, formant-like spectral peaks that change every syllable,
syllabic amplitude modulation, short fricative bursts, and maskers whose
spectra overlap the speech unevenly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from ..dsp import Waveform, rms

# (F1, F2, F3) in Hz for a handful of vowel-like targets
VOWELS = np.array([
    [730, 1090, 2440],
    [270, 2290, 3010],
    [530, 1840, 2480],
    [570, 840, 2410],
    [300, 870, 2240],
    [660, 1720, 2410],
    [440, 1020, 2240],
    [490, 1350, 1690],
])

SPEECH_RMS = 0.05


def _formant_envelope(freqs, formants, bandwidths=(90.0, 110.0, 170.0)):
    env = np.full_like(freqs, 0.02)
    for f, bw, gain in zip(formants, bandwidths, (1.0, 0.7, 0.45)):
        env += gain / (1.0 + ((freqs - f) / bw) ** 2)
    return env


def synth_utterance(rng: np.random.Generator, fs: int = 16000, duration: float = 2.2) -> Waveform:
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    f0_base = rng.uniform(100.0, 220.0)
    f0 = f0_base * (1.0 + 0.12 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / fs
    n_harm = int((0.45 * fs) // (f0_base * 1.15))
    source = np.zeros(n)
    for k in range(1, n_harm + 1):
        source += np.sin(k * phase) / k ** 0.7

    # syllables: random durations, each with its own vowel target
    bounds = [0]
    while bounds[-1] < n:
        bounds.append(bounds[-1] + int(fs * rng.uniform(0.16, 0.3)))
    bounds[-1] = n

    frame, hop = 512, 128
    win = np.hanning(frame)
    pad = np.pad(source, (frame, frame))
    out = np.zeros_like(pad)
    norm = np.zeros_like(pad)
    freqs = np.fft.rfftfreq(frame, 1.0 / fs)
    syll_of = np.searchsorted(bounds, np.arange(n), side="right") - 1
    targets = VOWELS[rng.integers(0, len(VOWELS), size=len(bounds))] * rng.uniform(0.9, 1.1, size=(len(bounds), 1))
    for start in range(0, len(pad) - frame + 1, hop):
        centre = min(max(start + frame // 2 - frame, 0), n - 1)
        s = syll_of[centre]
        # glide towards the next syllable's target in the last third
        frac = (centre - bounds[s]) / max(bounds[s + 1] - bounds[s], 1) if s + 1 < len(bounds) else 0.0
        mix = np.clip((frac - 0.66) * 3.0, 0.0, 1.0)
        formants = (1 - mix) * targets[s] + mix * targets[min(s + 1, len(targets) - 1)]
        spec = np.fft.rfft(pad[start:start + frame] * win)
        out[start:start + frame] += np.fft.irfft(spec * _formant_envelope(freqs, formants), frame) * win
        norm[start:start + frame] += win ** 2
    voiced = out[frame:frame + n] / np.maximum(norm[frame:frame + n], 1e-8)

    # syllabic envelope with soft onsets and shallow dips between syllables
    env = np.full(n, 0.06)
    fric = np.zeros(n)
    sos_hp = butter(4, [2500, min(7000, 0.45 * fs)], btype="bandpass", fs=fs, output="sos")
    for s in range(len(bounds) - 1):
        a, b = bounds[s], bounds[s + 1]
        length = b - a
        ramp = np.sin(np.pi * np.arange(length) / length) ** 0.6
        env[a:b] = np.maximum(env[a:b], rng.uniform(0.5, 1.0) * ramp)
        if rng.random() < 0.4:
            blen = int(fs * rng.uniform(0.04, 0.08))
            burst = sosfilt(sos_hp, rng.standard_normal(blen)) * np.hanning(blen)
            fric[a:a + blen] += 0.5 * burst[: len(fric[a:a + blen])]
    x = voiced * env + fric * np.std(voiced)
    x *= SPEECH_RMS / rms(x)
    return Waveform(x, fs)


NOISE_KINDS = ("speech_shaped", "babble", "low_rumble")


def synth_noise(rng: np.random.Generator, kind: str = "speech_shaped", fs: int = 16000, duration: float = 12.0) -> Waveform:
    n = int(round(duration * fs))
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    if kind == "speech_shaped":
        shape = 1.0 / np.sqrt(1.0 + (f / 500.0) ** 2)
    elif kind == "babble":
        shape = 1.0 / (1.0 + ((f - 700.0) / 600.0) ** 2) + 0.15 / np.sqrt(1.0 + (f / 2000.0) ** 2)
    elif kind == "low_rumble":
        shape = 1.0 / (1.0 + (f / 300.0) ** 2)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    x = np.fft.irfft(spec * shape, n)
    if kind == "babble":
        t = np.arange(n) / fs
        mod = 1.0 + 0.5 * np.sin(2 * np.pi * 3.1 * t) * np.sin(2 * np.pi * 0.7 * t + 1.0)
        x *= mod
    x *= 0.05 / rms(x)
    return Waveform(x, fs)


def write_toy_corpus(root, n_speech: int = 60, noise_kinds=NOISE_KINDS[:1], fs: int = 16000,
                     seed: int = 0, duration: float = 2.2) -> tuple[Path, Path]:
    """Write ``speech/`` and ``noise/`` WAV folders under ``root``."""
    from .wavio import write_wav

    root = Path(root)
    speech_dir, noise_dir = root / "speech", root / "noise"
    speech_dir.mkdir(parents=True, exist_ok=True)
    noise_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_speech):
        write_wav(speech_dir / f"utt{i:03d}.wav", synth_utterance(rng, fs, duration), bit_depth=32)
    for kind in noise_kinds:
        write_wav(noise_dir / f"{kind}.wav", synth_noise(rng, kind, fs), bit_depth=32)
    return speech_dir, noise_dir
