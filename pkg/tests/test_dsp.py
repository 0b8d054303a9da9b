import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imetricgan import dsp
from imetricgan.dsp import MagSpectrogram, Waveform
from imetricgan.errors import ShapeError, SignalError

from .conftest import sine


def dft_oracle(frame):
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    return np.sum(frame[None, :] * np.exp(-2j * np.pi * k * np.arange(n)[None, :] / n), axis=1)


def test_stft_matches_direct_dft(rng):
    w = Waveform(rng.standard_normal(5000), 16000)
    spec = dsp.stft(w)
    padded = np.pad(w.samples, (512, 512))
    for i in (0, 3, spec.n_frames - 1):
        frame = padded[i * 512 : i * 512 + 1024] * dsp.hann(1024)
        np.testing.assert_allclose(spec.bins[i], dft_oracle(frame), atol=1e-9)


def test_stft_frame_count_and_bins():
    for n in (1, 1023, 1024, 5000, 44100):
        spec = dsp.stft(Waveform(np.ones(n), 16000))
        assert spec.bins.shape == ((n + 1024 - 1024) // 512 + 1, 513)


def test_sine_peak_bin():
    spec = dsp.stft(sine(1000.0, 44100, 44100))
    assert np.all(np.argmax(np.abs(spec.bins[2:-2]), axis=1) == 23)
    # direct DFT of one windowed frame agrees on the peak
    frame = sine(1000.0, 44100, 1024).samples * dsp.hann(1024)
    assert np.argmax(np.abs(dft_oracle(frame))) == 23


def test_zero_waveform_gives_zero_spectrogram():
    assert not np.any(dsp.stft(Waveform(np.zeros(4096), 16000)).bins)


def test_stft_empty_input():
    with pytest.raises(SignalError, match="empty input"):
        dsp.stft(Waveform(np.zeros(0), 16000))


def test_round_trip(rng):
    for _ in range(50):
        n = int(rng.integers(1500, 30000))
        w = Waveform(rng.standard_normal(n), 16000)
        y = dsp.istft(dsp.stft(w))
        assert len(y) == n
        assert np.linalg.norm(y.samples - w.samples) / np.linalg.norm(w.samples) < 1e-6


def test_istft_linearity_and_zero_frame(rng):
    w = Waveform(rng.standard_normal(3000), 8000)
    spec = dsp.stft(w)
    doubled = dsp.istft(dsp.ComplexSpectrogram(2 * spec.bins, 8000, length=3000))
    np.testing.assert_allclose(doubled.samples, 2 * dsp.istft(spec).samples, atol=1e-12)
    zero = dsp.istft(dsp.ComplexSpectrogram(np.zeros((1, 513), complex), 8000))
    assert not np.any(zero.samples)


def test_istft_rejects_bad_bins():
    with pytest.raises(ShapeError):
        dsp.istft(dsp.ComplexSpectrogram(np.zeros((4, 257), complex), 8000))


def test_recombine(rng):
    w = Waveform(rng.standard_normal(8000), 16000)
    spec = dsp.stft(w)
    same = dsp.recombine(spec.magnitude(), spec)
    np.testing.assert_allclose(same.samples, w.samples, atol=1e-9)
    silent = dsp.recombine(MagSpectrogram(np.zeros(spec.bins.shape)), spec)
    assert not np.any(silent.samples)
    g = 0.37
    scaled = dsp.recombine(MagSpectrogram(g * np.abs(spec.bins)), spec)
    # Parseval: uniform gain scales the energy by g^2
    assert abs(np.sqrt(np.sum(scaled.samples**2) / np.sum(w.samples**2)) / g - 1) < 1e-4
    with pytest.raises(ShapeError):
        dsp.recombine(MagSpectrogram(np.zeros((2, 513))), spec)
    with pytest.raises(SignalError):
        dsp.recombine(dsp.compress(spec.magnitude()), spec)


def test_compress_expand():
    m = MagSpectrogram(np.array([[0.0, 1.0, 4.0]]))
    c = dsp.compress(m)
    assert c.compressed and c.mags[0, 0] == 0.0 and c.mags[0, 1] == 1.0
    np.testing.assert_allclose(dsp.expand(c).mags, m.mags, rtol=1e-9)
    with pytest.raises(SignalError):
        dsp.compress(c)
    with pytest.raises(SignalError):
        dsp.expand(m)


@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=40))
def test_compress_expand_inverse_property(values):
    m = MagSpectrogram(np.array(values)[None, :])
    np.testing.assert_allclose(dsp.expand(dsp.compress(m)).mags, m.mags, rtol=1e-9, atol=1e-300)


def test_energy_normalize(rng):
    mod = MagSpectrogram(np.full((1, 4), 1.0))  # sum of squares 4
    ref = MagSpectrogram(np.array([[1.0, 0, 0, 0]]))
    assert np.allclose(dsp.energy_normalize(mod, ref).mags, 0.5)
    a = MagSpectrogram(rng.random((10, 513)))
    assert np.array_equal(dsp.energy_normalize(a, a).mags, a.mags)
    b = MagSpectrogram(rng.random((10, 513)) * 7)
    out = dsp.energy_normalize(b, a)
    assert abs(np.sum(out.mags**2) / np.sum(a.mags**2) - 1) < 1e-6
    twice = dsp.energy_normalize(out, a)
    np.testing.assert_allclose(twice.mags, out.mags, rtol=1e-9)
    with pytest.raises(SignalError, match="degenerate enhancement"):
        dsp.energy_normalize(MagSpectrogram(np.zeros((10, 513))), a)
    with pytest.raises(SignalError):
        dsp.energy_normalize(a, MagSpectrogram(np.zeros((10, 513))))


def test_rms():
    assert dsp.rms(Waveform(np.full(10, 0.5), 8000)) == 0.5
    assert dsp.rms(Waveform(np.zeros(10), 8000)) == 0.0
    assert abs(dsp.rms(sine(100, 8000, 8000)) - 1 / np.sqrt(2)) < 1e-9
    with pytest.raises(SignalError):
        dsp.rms(np.zeros(0))


def test_mix_gain_examples(rng):
    s = Waveform(rng.standard_normal(4000), 8000)
    n = Waveform(rng.standard_normal(4000), 8000)
    n = n.with_samples(n.samples * dsp.rms(s) / dsp.rms(n))
    for snr, gain in ((0.0, 1.0), (-6.0206, 2.0), (20.0, 0.1)):
        scaled = dsp.scale_noise_to_snr(s, n, snr)
        assert abs(dsp.rms(scaled) / dsp.rms(n) - gain) < 1e-4
        mixed = dsp.mix_at_snr(s, n, snr)
        np.testing.assert_allclose(mixed.samples, s.samples + scaled.samples)


@settings(max_examples=50, deadline=None)
@given(st.floats(-30, 30), st.integers(0, 2**31 - 1))
def test_mix_achieves_snr(snr, seed):
    rng = np.random.default_rng(seed)
    s = Waveform(rng.standard_normal(2000), 8000)
    n = Waveform(rng.standard_normal(5000) * 3, 8000)
    scaled = dsp.scale_noise_to_snr(s, n, snr, seed)
    assert abs(20 * np.log10(dsp.rms(s) / dsp.rms(scaled)) - snr) < 0.01


def test_mix_errors(rng):
    s = Waveform(rng.standard_normal(100), 8000)
    with pytest.raises(SignalError):
        dsp.mix_at_snr(s, Waveform(np.zeros(200), 8000), 0.0)
    with pytest.raises(SignalError):
        dsp.mix_at_snr(s, Waveform(np.ones(50), 8000), 0.0)
    with pytest.raises(SignalError):
        dsp.mix_at_snr(s, Waveform(np.ones(200), 16000), 0.0)


def test_noise_crop_is_seeded(rng):
    s = Waveform(rng.standard_normal(100), 8000)
    n = Waveform(rng.standard_normal(1000), 8000)
    a = dsp.scale_noise_to_snr(s, n, 3.0, seed=5)
    b = dsp.scale_noise_to_snr(s, n, 3.0, seed=5)
    assert np.array_equal(a.samples, b.samples)


def test_resample():
    w = sine(1000.0, 44100, 44100)
    assert np.array_equal(dsp.resample(w, 44100).samples, w.samples)
    dc = dsp.resample(Waveform(np.full(44100, 0.3), 44100), 10000)
    assert abs(len(dc) - 10000) <= 1
    assert np.max(np.abs(dc.samples[200:-200] - 0.3)) < 1e-3
    y = dsp.resample(w, 10000)
    spec = np.abs(np.fft.rfft(y.samples[1000:9000]))
    freqs = np.fft.rfftfreq(8000, 1 / 10000)
    assert abs(freqs[np.argmax(spec)] - 1000.0) <= freqs[1]
    with pytest.raises(SignalError):
        dsp.resample(w, 0)


def test_remove_silent_frames_appended_silence(rng):
    speech = rng.standard_normal(128 * 40)
    ref = Waveform(np.concatenate([speech, np.zeros(128 * 40)]), 10000)
    out_ref, out_deg = dsp.remove_silent_frames(ref, ref)
    assert len(out_ref) == 128 * 40 + 128
    assert np.array_equal(out_ref.samples, out_deg.samples)


def test_remove_silent_frames_no_silence(rng):
    ref = Waveform(rng.standard_normal(128 * 50 + 128), 10000)
    deg = Waveform(rng.standard_normal(len(ref)), 10000)
    out_ref, out_deg = dsp.remove_silent_frames(ref, deg)
    assert len(out_ref) == len(ref) == len(out_deg)


def test_remove_silent_frames_half_active(rng):
    n_active = 128 * 30
    x = np.concatenate([rng.standard_normal(n_active), 1e-4 * rng.standard_normal(n_active)])
    # frame-energy oracle
    win = dsp.hann(256)
    energies = []
    padded = np.pad(x, (0, 256))
    for start in range(0, len(x) - 128, 128):
        energies.append(10 * np.log10(np.sum((padded[start : start + 256] * win) ** 2)))
    energies = np.array(energies)
    kept = np.sum(energies > energies.max() - 40)
    out, _ = dsp.remove_silent_frames(Waveform(x, 10000), Waveform(x, 10000))
    assert kept == n_active // 128
    assert len(out) == kept * 128 + 128


def test_remove_silent_frames_errors():
    z = Waveform(np.zeros(1000), 10000)
    with pytest.raises(SignalError, match="no active speech"):
        dsp.remove_silent_frames(z, z)
    with pytest.raises(SignalError):
        dsp.remove_silent_frames(z, Waveform(np.zeros(999), 10000))


def test_third_octave_bands(rng):
    assert not np.any(dsp.third_octave_bands(np.zeros((5, 257))))
    obm, centers = dsp.third_octave_matrix(10000, 512)
    for band in (3, 8, 12):
        tone = sine(centers[band], 10000, 5120)
        frames = dsp._frame(tone.samples, 512, 256) * dsp.hann(512)
        energy = dsp.third_octave_bands(np.fft.rfft(frames, axis=1))
        assert np.all(np.argmax(energy, axis=1) == band)
    # white noise: band energy grows with the number of bins in each band
    acc = np.zeros(15)
    for _ in range(100):
        frames = dsp._frame(rng.standard_normal(5120), 512, 256) * dsp.hann(512)
        acc += np.mean(dsp.third_octave_bands(np.fft.rfft(frames, axis=1)) ** 2, axis=0)
    widths = obm.sum(axis=1)
    assert np.all(np.diff(widths) >= 0)
    grows = np.diff(widths) > 0
    assert np.all(np.diff(acc)[grows] > 0)
    with pytest.raises(SignalError):
        dsp.third_octave_bands(np.zeros((5, 257)), fs=16000)


def test_gammatone_bank():
    fs = 16000
    assert not np.any(dsp.gammatone_bank(Waveform(np.zeros(4000), fs)))
    centers = dsp.erb_space(100, 6500, 31)
    for k in (2, 15, 28):
        e = dsp.gammatone_bank(sine(centers[k], fs, 8000), nfft=4096, frame_len=4000, hop=2000)
        assert np.all(np.argmax(e[1:-1], axis=1) == k)
    freqs = np.linspace(200, 6000, 500)
    total = np.sum(dsp.gammatone_response(freqs, centers) ** 2, axis=0)
    assert np.all((total >= 0.5) & (total <= 2.0))
    with pytest.raises(SignalError):
        dsp.gammatone_bank(Waveform(np.ones(4000), fs), f_lo=5000, f_hi=4000)
    with pytest.raises(SignalError):
        dsp.gammatone_bank(Waveform(np.ones(4000), fs), f_hi=9000)


def test_purity(rng):
    w = Waveform(rng.standard_normal(6000), 16000)
    assert np.array_equal(dsp.stft(w).bins, dsp.stft(w).bins)
    assert np.array_equal(dsp.resample(w, 10000).samples, dsp.resample(w, 10000).samples)
