import numpy as np
import pytest

from imetricgan import dsp, metrics, refmod
from imetricgan.errors import ConfigError
from imetricgan.refmod import ShapingProfile

from .conftest import sine


def test_shaping_gain_curve():
    g = refmod.shaping_gain_db([0.0, 125.0, 250.0, 500.0, 750.0, 1000.0, 2500.0, 4000.0, 6000.0, 8000.0, 9000.0])
    assert g[0] == -30.0 and g[1] == pytest.approx(-12.0) and g[2] == pytest.approx(-6.0)
    assert g[3] == 0.0 and g[4] == pytest.approx(6.0)
    assert np.all(g[5:8] == 12.0)
    assert g[8] == pytest.approx(6.0) and g[9] == 0.0 and g[10] == 0.0


def test_shaping_gain_is_smooth():
    f = np.linspace(0, 8000, 8001)
    g = refmod.shaping_gain_db(f)
    assert np.max(np.abs(np.diff(g[f >= 500]))) < 0.05


def test_profile_validation():
    for bad in (dict(attack_ms=0.0), dict(release_ms=-1.0), dict(ratio=0.5), dict(boost_db=np.inf),
                dict(plateau_hz=(4000.0, 1000.0))):
        with pytest.raises(ConfigError):
            ShapingProfile(**bad)


def test_static_curve_monotone():
    levels = np.linspace(-120, 0, 1201)
    out = levels + refmod.static_gain_db(levels)
    assert np.all(np.diff(out) >= 0)
    assert np.all(refmod.static_gain_db(levels[levels <= -20]) == 0.0)
    assert refmod.static_gain_db(0.0) == pytest.approx(-10.0)
    pts = ShapingProfile().knee_points()
    assert all(b[0] > a[0] and b[1] >= a[1] for a, b in zip(pts, pts[1:]))


def test_envelope_time_constants():
    fs = 16000
    p = ShapingProfile()
    x = np.ones(fs // 10)
    env = refmod.envelope(x, fs, p)
    n_att = int(round(p.attack_ms * 1e-3 * fs))
    assert env[n_att - 1] == pytest.approx(1 - np.exp(-1), abs=1e-3)
    full = refmod.envelope(np.concatenate([x, np.zeros(fs)]), fs, p)
    n_rel = int(round(p.release_ms * 1e-3 * fs))
    assert full[len(x) + n_rel - 1] / full[len(x) - 1] == pytest.approx(np.exp(-1), rel=1e-9)


def test_spectral_shape_boosts_mid_band():
    fs = 16000
    for freq, gain_db in ((2000.0, 12.0), (250.0, -6.0)):
        w = sine(freq, fs, fs, amp=0.1)
        y = refmod.spectral_shape(w)
        mid = slice(2048, -2048)
        ratio = 20 * np.log10(dsp.rms(y.samples[mid]) / dsp.rms(w.samples[mid]))
        assert ratio == pytest.approx(gain_db, abs=0.3)


def test_example_constraints(utterances):
    for u in utterances[:5]:
        y = refmod.make_example(u)
        assert len(y) == len(u) and y.sample_rate == u.sample_rate
        assert abs(dsp.db_change(u, y)) <= 0.1
        assert np.all(np.abs(y.samples) <= 1.0)


def test_example_improves_estoi(utterances, masker):
    wins = 0
    for i, u in enumerate(utterances):
        noise = dsp.scale_noise_to_snr(u, masker, -5.0, seed=i)
        y = refmod.make_example(u)
        wins += metrics.estoi(u, y.with_samples(y.samples + noise.samples)) > metrics.estoi(
            u, u.with_samples(u.samples + noise.samples))
    assert wins > len(utterances) // 2
