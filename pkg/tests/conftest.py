import numpy as np
import pytest

from imetricgan.data.toy import synth_noise, synth_utterance
from imetricgan.dsp import Waveform


@pytest.fixture(scope="session")
def utterances():
    rng = np.random.default_rng(1234)
    return [synth_utterance(rng) for _ in range(20)]


@pytest.fixture(scope="session")
def masker():
    return synth_noise(np.random.default_rng(99), "speech_shaped")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def sine(freq, fs, n, amp=1.0):
    return Waveform(amp * np.sin(2 * np.pi * freq * np.arange(n) / fs), fs)


TINY_ARCH = {
    "preset": "desk",
    "g_lstm_hidden": 8,
    "g_dense": 16,
    "d_filters": [4, 4],
    "d_kernels": [[3, 3], [3, 3]],
    "d_dense": [8, 4],
}


@pytest.fixture(scope="session")
def toy_samples(utterances, masker):
    """Ten training mixtures and three held-out ones, each with a rule-based example."""
    from imetricgan import dsp, refmod
    from imetricgan.data.manifest import TrainSample

    out = []
    for i, u in enumerate(utterances[:13]):
        snr = (-5.0, 0.0, 5.0)[i % 3]
        noise = dsp.scale_noise_to_snr(u, masker, snr, seed=i)
        out.append(TrainSample(f"utt{i:02d}", u, noise, snr, refmod.make_example(u)))
    return out[:10], out[10:]


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    results = test_acceptance.RESULTS
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, detail = results[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}")
