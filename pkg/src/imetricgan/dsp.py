"""Signal-processing kernels.

STFT analysis/synthesis, power-law compression, energy normalization,
SNR mixing, resampling, silence removal and the two auditory filterbanks
(one-third-octave for ESTOI, gammatone for SIIB).  Everything here is a
pure function of its inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal import firwin, resample_poly

from .errors import ShapeError, SignalError

logger = logging.getLogger(__name__)

WIN_LEN = 1024
HOP = 512
N_BINS = WIN_LEN // 2 + 1
POWER_LAW_P = 0.3


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise SignalError("waveform must be mono (1-D)")
        if int(self.sample_rate) <= 0:
            raise SignalError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided STFT, shape (frames, 513)."""

    bins: np.ndarray
    sample_rate: int
    length: int | None = None
    window_len: int = WIN_LEN
    hop: int = HOP

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]

    def magnitude(self) -> "MagSpectrogram":
        return MagSpectrogram(np.abs(self.bins))


@dataclass(frozen=True)
class MagSpectrogram:
    mags: np.ndarray
    compressed: bool = False
    p: float = POWER_LAW_P
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.mags)
        if m.ndim != 2:
            raise ShapeError(f"magnitude spectrogram must be 2-D, got shape {m.shape}")
        object.__setattr__(self, "mags", m)

    @property
    def shape(self):
        return self.mags.shape


def _require_nonempty(w: Waveform):
    if len(w) == 0:
        raise SignalError("empty input")
    if not np.all(np.isfinite(w.samples)):
        raise SignalError("waveform contains non-finite samples")


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (sums to a constant at 50 % overlap)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frame(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    n_frames = (len(x) - frame_len) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(x, frame_len)
    return view[: (n_frames - 1) * hop + 1 : hop]


def stft(w: Waveform) -> ComplexSpectrogram:
    _require_nonempty(w)
    padded = np.pad(w.samples, (HOP, HOP))
    frames = _frame(padded, WIN_LEN, HOP) * hann(WIN_LEN)
    return ComplexSpectrogram(np.fft.rfft(frames, axis=1), w.sample_rate, length=len(w))


def istft(s: ComplexSpectrogram, length: int | None = None) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft` (least-squares ISTFT)."""
    bins = np.asarray(s.bins)
    if bins.ndim != 2 or bins.shape[1] != N_BINS:
        raise ShapeError(f"expected (frames, {N_BINS}) bins, got {bins.shape}")
    if s.window_len != WIN_LEN or s.hop != HOP:
        raise ShapeError("spectrogram metadata does not match the fixed 1024/512 STFT")
    n_frames = bins.shape[0]
    win = hann(WIN_LEN)
    frames = np.fft.irfft(bins, n=WIN_LEN, axis=1) * win
    total = (n_frames - 1) * HOP + WIN_LEN
    out = np.zeros(total)
    norm = np.zeros(total)
    win_sq = win**2
    for i in range(n_frames):
        start = i * HOP
        out[start : start + WIN_LEN] += frames[i]
        norm[start : start + WIN_LEN] += win_sq
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    out = out[HOP:]
    if length is None:
        length = s.length if s.length is not None else total - 2 * HOP
    if len(out) < length:
        out = np.pad(out, (0, length - len(out)))
    return Waveform(out[:length], s.sample_rate)


def recombine(modified_mag: MagSpectrogram, phase_source: ComplexSpectrogram) -> Waveform:
    """Attach the phase of ``phase_source`` to new magnitudes and invert."""
    if modified_mag.compressed:
        raise SignalError("recombine needs linear (uncompressed) magnitudes")
    if modified_mag.shape != phase_source.bins.shape:
        raise ShapeError(
            f"magnitude shape {modified_mag.shape} != phase source {phase_source.bins.shape}"
        )
    phase = np.exp(1j * np.angle(phase_source.bins))
    spec = ComplexSpectrogram(
        modified_mag.mags * phase, phase_source.sample_rate, length=phase_source.length
    )
    return istft(spec)


def compress(m: MagSpectrogram, p: float = POWER_LAW_P) -> MagSpectrogram:
    if m.compressed:
        raise SignalError("spectrogram is already compressed")
    return MagSpectrogram(np.power(m.mags, p), compressed=True, p=p, meta=m.meta)


def expand(m: MagSpectrogram) -> MagSpectrogram:
    if not m.compressed:
        raise SignalError("spectrogram is not compressed")
    return MagSpectrogram(np.power(m.mags, 1.0 / m.p), compressed=False, p=m.p, meta=m.meta)


def energy_normalize(modified: MagSpectrogram, reference: MagSpectrogram) -> MagSpectrogram:
    """Rescale ``modified`` so its total squared energy equals ``reference``'s."""
    if modified.compressed or reference.compressed:
        raise SignalError("energy normalization operates on linear magnitudes")
    if modified.shape != reference.shape:
        raise ShapeError(f"shape mismatch {modified.shape} vs {reference.shape}")
    e_ref = float(np.sum(np.square(reference.mags)))
    e_mod = float(np.sum(np.square(modified.mags)))
    if e_ref <= 0.0:
        raise SignalError("reference spectrogram has zero energy")
    if e_mod <= 0.0:
        raise SignalError("degenerate enhancement")
    return MagSpectrogram(modified.mags * np.sqrt(e_ref / e_mod), meta=modified.meta)


def rms(w: Waveform | np.ndarray) -> float:
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if x.size == 0:
        raise SignalError("empty input")
    return float(np.sqrt(np.mean(np.square(x))))


def db_change(a: Waveform, b: Waveform) -> float:
    """Level difference 20*log10(rms(b)/rms(a)) in dB."""
    return 20.0 * np.log10(rms(b) / rms(a))


def crop_noise(noise: Waveform, length: int, seed: int) -> tuple[Waveform, int]:
    if len(noise) < length:
        raise SignalError(f"noise ({len(noise)} samples) shorter than speech ({length})")
    rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, len(noise) - length + 1))
    logger.debug("noise crop offset %d (seed %d)", offset, seed)
    return noise.with_samples(noise.samples[offset : offset + length]), offset


def scale_noise_to_snr(speech: Waveform, noise: Waveform, snr_db: float, seed: int = 0) -> Waveform:
    """Crop ``noise`` to the speech length and scale it to the requested global-RMS SNR."""
    if speech.sample_rate != noise.sample_rate:
        raise SignalError("speech and noise sample rates differ")
    if not np.isfinite(snr_db):
        raise SignalError("snr_db must be finite")
    seg, _ = crop_noise(noise, len(speech), seed)
    rs, rn = rms(speech), rms(seg)
    if rs == 0.0 or rn == 0.0:
        raise SignalError("zero-RMS speech or noise")
    gain = (rs / rn) * 10.0 ** (-snr_db / 20.0)
    return seg.with_samples(gain * seg.samples)


def mix_at_snr(speech: Waveform, noise: Waveform, snr_db: float, seed: int = 0) -> Waveform:
    scaled = scale_noise_to_snr(speech, noise, snr_db, seed)
    return speech.with_samples(speech.samples + scaled.samples)


def _resample_filter(up: int, down: int, zero_crossings: int = 16, beta: float = 8.0):
    max_rate = max(up, down)
    return firwin(2 * zero_crossings * max_rate + 1, 1.0 / max_rate, window=("kaiser", beta))


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited polyphase resampling (Kaiser-windowed sinc, beta 8)."""
    if target_rate is None or int(target_rate) <= 0:
        raise SignalError(f"target rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), target_rate)
    ratio = Fraction(target_rate, w.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    y = resample_poly(w.samples, up, down, window=_resample_filter(up, down))
    return Waveform(y, target_rate)


def _frame_padded(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    n = max(1, int(np.ceil(max(len(x) - frame_len, 0) / hop)) + 1)
    total = (n - 1) * hop + frame_len
    return _frame(np.pad(x, (0, total - len(x))), frame_len, hop)


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    n, flen = frames.shape
    out = np.zeros((n - 1) * hop + flen)
    for i in range(n):
        out[i * hop : i * hop + flen] += frames[i]
    return out


def active_frame_mask(x: np.ndarray, dyn_range_db: float = 40.0, frame: int = 256, hop: int = 128):
    frames = _frame_padded(x, frame, hop) * hann(frame)
    energy = np.sum(frames**2, axis=1)
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(energy)
    return level > (np.max(level) - dyn_range_db)


def remove_silent_frames(
    ref: Waveform, deg: Waveform, dyn_range_db: float = 40.0, frame: int = 256, hop: int = 128
) -> tuple[Waveform, Waveform]:
    """Drop frames whose reference energy is more than ``dyn_range_db`` below the loudest.

    Kept frames are Hann-windowed and overlap-added, so both outputs have
    ``n_kept * hop + (frame - hop)`` samples (the original length when
    nothing is removed).
    """
    if len(ref) != len(deg):
        raise SignalError(f"length mismatch: {len(ref)} vs {len(deg)}")
    _require_nonempty(ref)
    mask = active_frame_mask(ref.samples, dyn_range_db, frame, hop)
    if not np.any(mask):
        raise SignalError("no active speech")
    win = hann(frame)
    out = []
    for sig in (ref, deg):
        frames = _frame_padded(sig.samples, frame, hop)[mask] * win
        y = _overlap_add(frames, hop)
        if np.all(mask):
            y = y[: len(sig)]
        out.append(sig.with_samples(y))
    return out[0], out[1]


def third_octave_matrix(fs: int, nfft: int, n_bands: int = 15, min_freq: float = 150.0):
    """Binary band-assignment matrix (n_bands, nfft//2+1) and centre frequencies."""
    freqs = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands)
    centers = min_freq * 2.0 ** (k / 3.0)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((n_bands, len(freqs)))
    for b in range(n_bands):
        lo_bin = int(np.argmin(np.square(freqs - lo[b])))
        hi_bin = int(np.argmin(np.square(freqs - hi[b])))
        obm[b, lo_bin:hi_bin] = 1.0
    return obm, centers


def third_octave_bands(spec: np.ndarray, fs: int = 10000, nfft: int = 512) -> np.ndarray:
    """Band energies, (frames, 15), from a (frames, nfft//2+1) spectrogram at 10 kHz."""
    if fs != 10000:
        raise SignalError(f"one-third-octave analysis expects 10 kHz input, got {fs}")
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != nfft // 2 + 1:
        raise ShapeError(f"expected (frames, {nfft // 2 + 1}) spectrogram, got {spec.shape}")
    obm, _ = third_octave_matrix(fs, nfft)
    return np.sqrt(np.abs(spec) ** 2 @ obm.T)


def erb(f):
    return 24.7 * (4.37 * np.asarray(f) / 1000.0 + 1.0)


def erb_space(f_lo: float, f_hi: float, n: int) -> np.ndarray:
    """``n`` centre frequencies equally spaced on the ERB-number scale."""
    e_lo = 21.4 * np.log10(4.37 * f_lo / 1000.0 + 1.0)
    e_hi = 21.4 * np.log10(4.37 * f_hi / 1000.0 + 1.0)
    e = np.linspace(e_lo, e_hi, n)
    return (10.0 ** (e / 21.4) - 1.0) * 1000.0 / 4.37


def gammatone_response(freqs, centers, order: int = 4) -> np.ndarray:
    """Magnitude response (n_filters, n_freqs) of order-``order`` gammatone filters."""
    freqs = np.asarray(freqs, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    b = 1.019 * erb(centers)[:, None]
    return (1.0 + ((freqs[None, :] - centers[:, None]) / b) ** 2) ** (-order / 2.0)


def gammatone_bank(
    x: Waveform,
    n_filters: int = 31,
    f_lo: float = 100.0,
    f_hi: float = 6500.0,
    frame_len: int = 400,
    hop: int = 200,
    nfft: int = 512,
) -> np.ndarray:
    """Per-frame gammatone filterbank energies, shape (frames, n_filters)."""
    nyq = x.sample_rate / 2.0
    if not (0 < f_lo < f_hi < nyq):
        raise SignalError(f"invalid band edges: need 0 < {f_lo} < {f_hi} < {nyq}")
    if n_filters < 1:
        raise SignalError("n_filters must be positive")
    _require_nonempty(x)
    frames = _frame_padded(x.samples, frame_len, hop) * hann(frame_len)
    power = np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / x.sample_rate)
    resp = gammatone_response(freqs, erb_space(f_lo, f_hi, n_filters)) ** 2
    return power @ resp.T
