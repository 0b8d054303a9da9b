import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imetricgan import dsp, metrics
from imetricgan.dsp import Waveform
from imetricgan.errors import MetricError
from imetricgan.metrics import MetricScores, MetricSelection


def test_estoi_identity_and_gain(utterances):
    for x in utterances[:5]:
        assert abs(metrics.estoi(x, x) - 1.0) < 1e-6
        assert abs(metrics.estoi(x, x.with_samples(0.3 * x.samples)) - 1.0) < 1e-6


def test_estoi_snr_ordering(utterances, masker):
    means = []
    for snr in (10.0, 0.0, -10.0):
        vals = [
            metrics.estoi(x, dsp.mix_at_snr(x, masker, snr, seed=i))
            for i, x in enumerate(utterances)
        ]
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2]


def test_estoi_too_short():
    rng = np.random.default_rng(0)
    x = Waveform(rng.standard_normal(3000), 10000)
    with pytest.raises(MetricError, match="signal too short"):
        metrics.estoi(x, x)


def test_siib_self_and_uncorrelated(utterances, masker):
    x = utterances[0]
    self_info = metrics.siib(x, x)
    assert self_info > metrics.DEFAULT_R_MAX
    noise = dsp.scale_noise_to_snr(x, masker, 0.0, seed=3)
    assert metrics.siib(x, noise) < 0.05 * self_info


def test_siib_monotone_in_snr(utterances, masker):
    means = []
    for snr in (-15.0, -5.0, 5.0):
        means.append(np.mean([metrics.siib(x, dsp.mix_at_snr(x, masker, snr, seed=i)) for i, x in enumerate(utterances)]))
    assert means[0] <= means[1] <= means[2]


def test_siib_insufficient_material():
    rng = np.random.default_rng(0)
    x = Waveform(rng.standard_normal(8000), 16000)
    with pytest.raises(MetricError, match="insufficient speech material"):
        metrics.siib(x, x)


def test_gain_invariance(utterances, masker):
    x = utterances[1]
    y = dsp.mix_at_snr(x, masker, -3.0, seed=1)
    g = 0.25
    xs, ys = x.with_samples(g * x.samples), y.with_samples(g * y.samples)
    assert abs(metrics.estoi(x, y) - metrics.estoi(xs, ys)) < 1e-4
    a, b = metrics.siib(x, y), metrics.siib(xs, ys)
    assert abs(a - b) < 1e-4 * max(a, 1.0)


def test_normalize_siib():
    assert metrics.normalize_siib(0.0, 750) == 0.0
    assert metrics.normalize_siib(375.0, 750) == 0.5
    assert metrics.normalize_siib(1500.0, 750) == 1.0
    with pytest.raises(MetricError):
        metrics.normalize_siib(-1.0)


@given(st.floats(0, 1e5), st.floats(0, 1e5))
def test_normalize_siib_monotone_bounded(a, b):
    lo, hi = sorted((a, b))
    na, nb = metrics.normalize_siib(lo), metrics.normalize_siib(hi)
    assert 0.0 <= na <= nb <= 1.0


def test_q_scores_convention(utterances, masker):
    x = utterances[2]
    silent = x.with_samples(np.zeros(len(x)))
    clean = metrics.q_scores(x, x, silent)
    assert abs(clean.estoi - 1.0) < 1e-6
    assert clean.siib_norm == 1.0
    low = metrics.q_scores(x, x, dsp.scale_noise_to_snr(x, masker, -20.0, 0))
    high = metrics.q_scores(x, x, dsp.scale_noise_to_snr(x, masker, 10.0, 0))
    assert low.estoi < high.estoi and low.siib_raw < high.siib_raw
    # degraded = processed + noise, reference = unprocessed
    noise = dsp.scale_noise_to_snr(x, masker, 0.0, 0)
    direct = metrics.estoi(x, x.with_samples(x.samples + noise.samples))
    assert metrics.q_scores(x, x, noise).estoi == direct
    with pytest.raises(MetricError):
        metrics.q_scores(x, x, Waveform(np.zeros(len(x) - 1), x.sample_rate))


def test_q_scores_selection(utterances):
    x = utterances[0]
    z = x.with_samples(np.zeros(len(x)))
    only = metrics.q_scores(x, x, z, MetricSelection(("estoi",)))
    assert only.siib_raw is None and only.estoi is not None
    with pytest.raises(MetricError):
        only.vector(MetricSelection(("siib",)))


def test_metric_selection_order():
    sel = MetricSelection(("estoi", "siib"))
    assert sel.names == ("siib", "estoi") and sel.k == 2
    assert MetricSelection.parse("siib+estoi") == sel
    with pytest.raises(MetricError):
        MetricSelection(("pesq",))
    scores = MetricScores(estoi=0.4, siib_raw=300.0, siib_norm=0.4)
    assert list(scores.vector(sel)) == [0.4, 0.4]


def test_determinism(utterances, masker):
    x = utterances[3]
    y = dsp.mix_at_snr(x, masker, 0.0, seed=2)
    assert metrics.siib(x, y) == metrics.siib(x, y)
    assert metrics.estoi(x, y) == metrics.estoi(x, y)
