"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see conftest.py).  Criteria 7
and 8 train desk-scale models on the hermetic toy corpus and take most of
the suite's runtime.
"""

import time

import numpy as np
import pytest

from imetricgan import dsp, metrics, refmod
from imetricgan.config import RunConfig
from imetricgan.data.checkpoint import decode_checkpoint, encode_checkpoint
from imetricgan.data.manifest import load_split, prepare
from imetricgan.data.toy import write_toy_corpus
from imetricgan.dsp import Waveform
from imetricgan.errors import DivergenceError
from imetricgan.gan.models import Architecture, Generator
from imetricgan.gan.pipeline import enhance
from imetricgan.gan.train import Trainer, pearson
from imetricgan.neural import Tensor
from imetricgan.neural import autograd as ag

from . import test_neural
from .conftest import TINY_ARCH

RESULTS = {}

# desk-scale training used by criteria 7 and 8
TOY_UTTERANCES = 60
TOY_SNRS = (-10.0, -5.0, 0.0)
# held-out utterances drive early stopping and generator selection; test utterances are scored
HELDOUT_FRACTION, TEST_FRACTION = 0.2, 0.2
DESK_TRAINING = dict(architecture="desk", epochs=50, patience=5, seed=0, lr_g=2e-5, lr_d=1e-3)
TIME_BUDGET_S = 3600.0


def record(number, title, ok, detail):
    RESULTS[number] = (bool(ok), title, detail)
    assert ok, f"criterion {number} ({title}) failed: {detail}"


# -- 1 -------------------------------------------------------------------------

def test_01_dsp_round_trip():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 48000))
        x = rng.standard_normal(n) * rng.uniform(1e-3, 1.0)
        w = Waveform(x, 16000)
        y = dsp.istft(dsp.stft(w), length=n).samples
        worst = max(worst, np.linalg.norm(y - x) / np.linalg.norm(x))
    ten_s = Waveform(rng.standard_normal(160000) * 0.1, 16000)
    t0 = time.perf_counter()
    dsp.istft(dsp.stft(ten_s), length=len(ten_s))
    elapsed = time.perf_counter() - t0
    record(1, "DSP round trip", worst < 1e-6 and elapsed < 1.0,
           f"max relative L2 error {worst:.2e} (< 1e-6); {elapsed:.3f} s per 10 s of audio (< 1 s)")


# -- 2 -------------------------------------------------------------------------

def test_02_enhance_constraints():
    rng = np.random.default_rng(2)
    G = Generator(Architecture.preset("desk", 2), np.random.default_rng(5))
    worst_db, bad_len = 0.0, 0
    for i in range(100):
        n = int(rng.integers(2000, 24000))
        s = Waveform(rng.standard_normal(n) * rng.uniform(0.01, 0.3), 16000)
        w = Waveform(rng.standard_normal(n) * rng.uniform(0.01, 0.3), 16000)
        out = enhance(s, w, G, domain=("compressed", "linear")[i % 2])
        bad_len += len(out) != n
        worst_db = max(worst_db, abs(dsp.db_change(s, out)))
    record(2, "duration and RMS constraints", bad_len == 0 and worst_db <= 0.1,
           f"{bad_len} length mismatches over 100 calls; worst RMS change {worst_db:.2e} dB (<= 0.1)")


# -- 3 -------------------------------------------------------------------------

def test_03_mask_bounds():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.standard_normal(500_000) * 10.0, rng.uniform(-1e6, 1e6, 500_000)])
    m = ag.scale_activation(Tensor(x)).data
    mid = float(ag.scale_activation(Tensor(0.0)).data)
    lo, hi = np.exp(-2.5), np.exp(5.5)
    ok = m.min() >= lo and m.max() <= hi and abs(mid - np.exp(1.5)) < 1e-12
    record(3, "mask boundedness", ok,
           f"10^6 activations in [{m.min():.4f}, {m.max():.2f}] within [{lo:.4f}, {hi:.2f}]; "
           f"|f(0) - e^1.5| = {abs(mid - np.exp(1.5)):.1e}")


# -- 4 -------------------------------------------------------------------------

def test_04_gradient_fidelity(rng, monkeypatch):
    failures = []
    for name, fn, args in (
        ("dense", test_neural.test_gradcheck_dense, (rng,)),
        ("conv", test_neural.test_gradcheck_conv, ()),
        ("lstm", test_neural.test_gradcheck_lstm, ()),
        ("discriminator", test_neural.test_gradcheck_discriminator, (monkeypatch,)),
    ):
        try:
            fn(*args)
        except AssertionError as exc:
            failures.append(f"{name}: {exc}")
    record(4, "gradient fidelity", not failures,
           "; ".join(failures) or "dense/conv < 1e-6, LSTM < 1e-4, full D < 1e-3 on 20 configurations each")


# -- 5 -------------------------------------------------------------------------

def test_05_lipschitz(toy_samples):
    train, held = toy_samples
    cfg = RunConfig(variant="MultiGAN", architecture="desk", epochs=10, patience=100, seed=5)
    trainer = Trainer(cfg, train[:6], held[:1])
    worst = []

    def check(t, summary):
        for layer in t.D.sn_layers():
            w = layer.effective_weight().data
            worst.append(np.linalg.svd(w.reshape(w.shape[0], -1).astype(np.float64), compute_uv=False)[0])

    trainer.fit(on_epoch=check)
    n_epochs = len(worst) // len(trainer.D.sn_layers())
    record(5, "Lipschitz constraint", n_epochs == 10 and max(worst) <= 1.01,
           f"max sigma of {len(trainer.D.sn_layers())} normalised layers over {n_epochs} epochs: {max(worst):.4f} (<= 1.01)")


# -- 6 -------------------------------------------------------------------------

def test_06_metric_sanity(utterances, masker):
    identity = max(abs(metrics.estoi(u, u) - 1.0) for u in utterances)
    means = {}
    for snr in (5.0, -5.0, -15.0):
        e, s = [], []
        for i, u in enumerate(utterances):
            mix = dsp.mix_at_snr(u, masker, snr, seed=i)
            e.append(metrics.estoi(u, mix))
            s.append(metrics.siib(u, mix))
        means[snr] = (np.mean(e), np.mean(s))
    ordered = all(means[5.0][k] > means[-5.0][k] > means[-15.0][k] for k in (0, 1))
    u = utterances[0]
    noise = dsp.scale_noise_to_snr(u, masker, 0.0, seed=9)
    ratio = metrics.siib(u, noise) / metrics.siib(u, u)
    record(6, "metric sanity", identity <= 1e-6 and ordered and ratio < 0.05,
           f"|ESTOI(x,x)-1| <= {identity:.1e}; ESTOI means {[round(float(means[k][0]), 3) for k in means]}, "
           f"SIIB means {[round(float(means[k][1]), 1) for k in means]} b/s at +5/-5/-15 dB; "
           f"SIIB(x, noise)/SIIB(x, x) = {ratio:.3f}")


# -- 7 and 8 -------------------------------------------------------------------

@pytest.fixture(scope="module")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    speech_dir, noise_dir = write_toy_corpus(root / "toy", n_speech=TOY_UTTERANCES, seed=0)
    rows = prepare(speech_dir, noise_dir, root / "data", snr_grid=TOY_SNRS, seed=0, with_examples=True,
                   write_mixtures=False, heldout_fraction=HELDOUT_FRACTION, test_fraction=TEST_FRACTION)
    return load_split(rows, "train"), load_split(rows, "heldout"), load_split(rows, "test")


def _train(variant, corpus):
    train, held, _ = corpus
    cfg = RunConfig(variant=variant, **DESK_TRAINING)
    trainer = Trainer(cfg, train, held)
    t0 = time.perf_counter()
    try:
        trainer.fit()
        diverged = None
    except DivergenceError as exc:
        diverged = str(exc)
    return trainer, time.perf_counter() - t0, diverged


def _test_set(trainer, corpus):
    return [trainer.prepare(s) for s in corpus[2]]


@pytest.fixture(scope="module")
def multigan(toy_corpus):
    trainer, elapsed, diverged = _train("MultiGAN", toy_corpus)
    test_set = _test_set(trainer, toy_corpus)
    final = trainer.evaluate(test_set)
    trainer.use_best_generator()
    return trainer, elapsed, diverged, final, trainer.evaluate(test_set)


@pytest.mark.slow
def test_07_surrogate_learning(multigan):
    trainer, elapsed, diverged, result, _ = multigan
    details, ok = [], diverged is None and elapsed <= TIME_BUDGET_S and trainer.epoch <= 50
    for k, name in enumerate(trainer.selection.names):
        d = np.concatenate([result[c]["d"][:, k] for c in ("model", "refmod", "plain")])
        q = np.concatenate([result[c]["q"][:, k] for c in ("model", "refmod", "plain")])
        r = pearson(d, q)
        ok = ok and r >= 0.8
        details.append(f"{name} r = {r:.3f}")
    details.append(f"{len(d)} test-split predictions, {trainer.epoch} epochs, {elapsed / 60:.1f} min")
    if diverged:
        details.append(f"diverged: {diverged}")
    record(7, "surrogate learning", ok, "; ".join(details) + " (r >= 0.8 per metric, <= 60 min)")


def _improvement(result, k=None):
    model, plain = result["model"]["q"], result["plain"]["q"]
    if k is None:
        return model.mean(axis=1) - plain.mean(axis=1)
    return model[:, k] - plain[:, k]


@pytest.mark.slow
def test_08_enhancement_trend(multigan, toy_corpus):
    trainer, _, diverged, _, result = multigan
    gain = _improvement(result)
    frac = float(np.mean(gain > 0))
    ok = diverged is None and gain.mean() > 0 and frac >= 0.7
    detail = (f"MultiGAN (epoch {trainer.best_g['epoch']} of {trainer.epoch}) mean normalised metric "
              f"{result['model']['q'].mean():.4f} vs plain {result['plain']['q'].mean():.4f}, "
              f"improved on {frac:.0%} of {len(gain)} test mixtures")

    zs, _, zs_diverged = _train("SiibGAN-zs", toy_corpus)
    zs.use_best_generator()
    zs_result = zs.evaluate(_test_set(zs, toy_corpus))
    zs_gain = _improvement(zs_result, 0)
    ok = ok and zs_diverged is None and zs_gain.mean() > 0
    detail += (f"; SiibGAN-zs {'diverged' if zs_diverged else 'trained'} for {zs.epoch} epochs, "
               f"mean SIIB change {zs_gain.mean():+.4f}")
    record(8, "enhancement trend", ok, detail + " (need > 0, >= 70%, SiibGAN-zs > 0)")


# -- 9 -------------------------------------------------------------------------

def test_09_determinism_and_persistence(toy_samples, tmp_path):
    train, held = toy_samples
    train, held = train[:5], held[:1]

    def cfg():
        return RunConfig(variant="MultiGAN", architecture=TINY_ARCH, epochs=3, patience=10, seed=11)

    for name in ("a", "b"):
        Trainer(cfg(), train, held, run_dir=tmp_path / name).fit()
    same_logs = (tmp_path / "a" / "logs.jsonl").read_bytes() == (tmp_path / "b" / "logs.jsonl").read_bytes()

    Trainer(cfg(), train, held, run_dir=tmp_path / "c").fit(epochs=1)
    Trainer.resume(tmp_path / "c" / "ckpt" / "epoch_1.imgn", cfg(), train, held, run_dir=tmp_path / "c").fit()
    resumed = (tmp_path / "c" / "logs.jsonl").read_bytes() == (tmp_path / "a" / "logs.jsonl").read_bytes()

    blob = (tmp_path / "a" / "ckpt" / "epoch_3.imgn").read_bytes()
    round_trip = encode_checkpoint(*decode_checkpoint(blob)) == blob
    same_ckpt = blob == (tmp_path / "c" / "ckpt" / "epoch_3.imgn").read_bytes()
    record(9, "determinism and persistence", same_logs and resumed and round_trip and same_ckpt,
           f"identical logs across runs: {same_logs}; resumed run matches: {resumed}; "
           f"checkpoint byte round trip: {round_trip}; resumed checkpoint identical: {same_ckpt}")


# -- 10 ------------------------------------------------------------------------

def test_10_reference_modifier(utterances, masker):
    worst_db, bad_len, wins = 0.0, 0, 0
    for i, u in enumerate(utterances):
        y = refmod.make_example(u)
        bad_len += len(y) != len(u)
        worst_db = max(worst_db, abs(dsp.db_change(u, y)))
        noise = dsp.scale_noise_to_snr(u, masker, -5.0, seed=i)
        wins += metrics.estoi(u, y.with_samples(y.samples + noise.samples)) > metrics.estoi(
            u, u.with_samples(u.samples + noise.samples))
    ok = bad_len == 0 and worst_db <= 0.1 and wins > len(utterances) / 2
    record(10, "reference modifier sanity", ok,
           f"{bad_len} length mismatches, worst RMS change {worst_db:.2e} dB; "
           f"ESTOI improved at -5 dB on {wins}/{len(utterances)} utterances")
