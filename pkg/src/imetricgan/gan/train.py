"""Alternating discriminator/generator training.

Per utterance (batch size 1) the discriminator is updated once to predict
the true metric scores of the current generator output (and of the rule
based example, when the variant uses one), then the generator is updated
once to push the frozen discriminator's prediction towards the target.
"""

from __future__ import annotations

import contextlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import dsp
from ..config import RunConfig
from ..data.checkpoint import load_checkpoint, save_checkpoint
from ..data.manifest import TrainSample
from ..errors import ConfigError, DataError, DivergenceError, MetricError
from ..metrics import q_scores
from ..neural import autograd as ag
from ..neural.optim import ParamStore, adam_step
from . import losses
from .models import Architecture, Discriminator, Generator
from .pipeline import Features, apply_mask, compressed_mag, extract_features, reconstruct

logger = logging.getLogger(__name__)

DTYPE = np.float32
FORMAT = "imetricgan-checkpoint"


def resolve_architecture(spec, n_metrics: int) -> Architecture:
    if isinstance(spec, str):
        return Architecture.preset(spec, n_metrics)
    if isinstance(spec, dict):
        d = dict(spec)
        preset = d.pop("preset", None)
        base = Architecture.preset(preset, n_metrics).to_dict() if preset else {"n_metrics": n_metrics}
        base.update(d)
        base["n_metrics"] = n_metrics
        return Architecture.from_dict(base)
    raise ConfigError(f"architecture must be a preset name or a mapping, got {spec!r}")


@dataclass
class Prepared:
    sample: TrainSample
    feats: Features
    rms: float
    example_c: np.ndarray | None = None
    q_example: np.ndarray | None = None


@contextlib.contextmanager
def frozen(module):
    """Evaluate ``module`` without power-iteration updates or parameter gradients."""
    params = module.parameters()
    flags = [p.requires_grad for p in params]
    was_training = module.training
    for p in params:
        p.requires_grad = False
    module.eval()
    try:
        yield module
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f
        module.train(was_training)


def _floats(values) -> list:
    return [float(v) for v in np.asarray(values).reshape(-1)]


def pearson(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size < 2 or np.std(a) == 0 or np.std(b) == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


class Trainer:
    def __init__(self, config: RunConfig, train: list[TrainSample], heldout=(), run_dir=None):
        self.config = config
        self.variant = config.variant_config
        self.selection = self.variant.selection
        if not train:
            raise DataError("training set is empty")
        if self.variant.uses_examples and any(s.enhanced_example is None for s in train):
            raise ConfigError("variant requires enhanced examples")
        self.arch = resolve_architecture(config.architecture, self.selection.k)
        seed = config.seed
        self.G = Generator(self.arch, np.random.default_rng([seed, 1]), DTYPE)
        self.D = Discriminator(self.arch, np.random.default_rng([seed, 2]), DTYPE)
        self.g_store = ParamStore(self.G.named_parameters())
        self.d_store = ParamStore(self.D.named_parameters())
        self.rng = np.random.default_rng([seed, 3])
        self.epoch = 0
        self.best_heldout = None
        self.bad_epochs = 0
        # generator with the best held-out metric score so far
        self.best_g = {"epoch": 0, "score": None, "params": None}
        self.train_set = [self.prepare(s) for s in train]
        self.heldout_set = [self.prepare(s) for s in heldout]
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.last_checkpoint = None

    # -- data ------------------------------------------------------------
    def prepare(self, s: TrainSample) -> Prepared:
        """Features (and cached example spectra) for one sample."""
        feats = extract_features(s.speech, s.noise)
        prep = Prepared(s, feats, dsp.rms(s.speech))
        if s.enhanced_example is not None and self.variant.uses_examples:
            prep.example_c = compressed_mag(s.enhanced_example)
        return prep

    def _q(self, processed: dsp.Waveform, prep: Prepared) -> np.ndarray:
        s = prep.sample
        scores = q_scores(processed, s.speech, s.noise, self.selection, self.config.r_max)
        return scores.vector(self.selection)

    def _q_example(self, prep: Prepared) -> np.ndarray:
        if prep.q_example is None:
            prep.q_example = self._q(prep.sample.enhanced_example, prep)
        return prep.q_example

    def _generate(self, prep: Prepared):
        mask = self.G(prep.feats.speech_c, prep.feats.noise_c)
        processed_c, linear = apply_mask(mask, prep.feats.speech_c, domain=self.config.mask_domain)
        return processed_c, reconstruct(linear, prep.feats.speech_spec, prep.rms)

    # -- one utterance -----------------------------------------------------
    def step(self, prep: Prepared) -> dict:
        sc, nc = prep.feats.speech_c, prep.feats.noise_c
        record = {"epoch": self.epoch, "sample_id": prep.sample.id}
        processed_c, enhanced = self._generate(prep)
        try:
            q_gen = self._q(enhanced, prep)
            q_ex = self._q_example(prep) if self.variant.uses_examples else None
        except MetricError as exc:
            logger.warning("skipping %s: %s", prep.sample.id, exc)
            record["skipped"] = str(exc)
            return record

        # discriminator update on the current generator output
        self.D.train()
        d_gen = self.D(processed_c.detach(), sc, nc)
        if self.variant.uses_examples:
            d_ex = self.D(prep.example_c, sc, nc)
            d_loss = losses.d_loss_with_examples([d_gen], [q_gen], [d_ex], [q_ex])
        else:
            d_loss = losses.d_loss_zero_knowledge([d_gen], [q_gen])
        self.d_store.zero_grad()
        d_loss.backward()
        adam_step(self.d_store, lr=self.config.lr_d)

        # generator update through the frozen discriminator
        with frozen(self.D):
            d_new = self.D(processed_c, sc, nc)
            g_loss = losses.g_loss([d_new], self.config.target)
            self.g_store.zero_grad()
            g_loss.backward()
        adam_step(self.g_store, lr=self.config.lr_g)

        names = self.selection.names
        record.update(
            d_loss=float(d_loss.data),
            g_loss=float(g_loss.data),
            q=dict(zip(names, _floats(q_gen))),
            d=dict(zip(names, _floats(d_gen.data))),
        )
        return record

    # -- epochs ------------------------------------------------------------
    def run_epoch(self) -> list[dict]:
        self.epoch += 1
        order = self.rng.permutation(len(self.train_set))
        records = [self.step(self.train_set[i]) for i in order]
        self._log(records)
        return records

    def evaluate(self, preps=None) -> dict:
        """Discriminator predictions and true scores on held-out utterances.

        Conditions: generator output ("model"), the rule-based example
        ("refmod", when available) and the unmodified speech ("plain").
        """
        preps = self.heldout_set if preps is None else preps
        out = {c: {"d": [], "q": [], "ids": []} for c in ("model", "refmod", "plain")}
        with ag.no_grad(), frozen(self.D):
            for prep in preps:
                s = prep.sample
                sc, nc = prep.feats.speech_c, prep.feats.noise_c
                processed_c, enhanced = self._generate(prep)
                conds = [("model", processed_c, enhanced), ("plain", sc, s.speech)]
                if s.enhanced_example is not None:
                    conds.append(("refmod", compressed_mag(s.enhanced_example), s.enhanced_example))
                for name, spec_c, wave in conds:
                    try:
                        q = self._q(wave, prep)
                    except MetricError as exc:
                        logger.warning("held-out %s/%s skipped: %s", s.id, name, exc)
                        continue
                    out[name]["d"].append(self.D(spec_c, sc, nc).data.astype(np.float64))
                    out[name]["q"].append(q)
                    out[name]["ids"].append(s.id)
        for cond in out.values():
            k = self.selection.k
            cond["d"] = np.array(cond["d"]).reshape(-1, k)
            cond["q"] = np.array(cond["q"]).reshape(-1, k)
        return out

    def heldout_error(self, result=None) -> float | None:
        if not self.heldout_set:
            return None
        result = result or self.evaluate()
        errs = [np.mean((c["d"] - c["q"]) ** 2) for k, c in result.items() if k != "plain" and len(c["q"])]
        return float(np.mean(errs)) if errs else None

    def use_best_generator(self) -> int:
        """Load the best held-out generator into ``self.G``; returns its epoch (0 = current weights)."""
        if self.best_g["params"] is not None:
            for name, p in self.G.named_parameters():
                p.data[...] = self.best_g["params"][name]
        return self.best_g["epoch"]

    def fit(self, epochs=None, on_epoch=None) -> list[dict]:
        """Train until ``epochs`` (default: config) or early stopping."""
        epochs = self.config.epochs if epochs is None else epochs
        summaries = []
        try:
            while self.epoch < epochs:
                records = self.run_epoch()
                summary = self._epoch_summary(records)
                summaries.append(summary)
                if self.run_dir is not None and self.epoch % self.config.checkpoint_every == 0:
                    self.last_checkpoint = self.save(self.run_dir / "ckpt" / f"epoch_{self.epoch}.imgn")
                if on_epoch is not None:
                    on_epoch(self, summary)
                if summary.get("stop"):
                    logger.info("early stop after epoch %d", self.epoch)
                    break
        except DivergenceError as exc:
            raise DivergenceError(f"training diverged in epoch {self.epoch}: {exc}", self.last_checkpoint) from exc
        return summaries

    def _epoch_summary(self, records) -> dict:
        done = [r for r in records if "skipped" not in r]
        summary = {
            "epoch": self.epoch,
            "type": "epoch",
            "d_loss": float(np.mean([r["d_loss"] for r in done])) if done else None,
            "g_loss": float(np.mean([r["g_loss"] for r in done])) if done else None,
            "skipped": len(records) - len(done),
        }
        if self.heldout_set:
            result = self.evaluate()
            err = self.heldout_error(result)
            model, plain = result["model"]["q"], result["plain"]["q"]
            if len(model) and len(plain):
                score = float(model.mean())
                summary["heldout_q_model"] = score
                summary["heldout_q_plain"] = float(plain.mean())
                if self.best_g["score"] is None or score > self.best_g["score"]:
                    self.best_g = {"epoch": self.epoch, "score": score,
                                   "params": {k: p.data.copy() for k, p in self.G.named_parameters()}}
            if err is not None:
                summary["heldout_d_mse"] = err
                if self.best_heldout is None or err < self.best_heldout:
                    self.best_heldout, self.bad_epochs = err, 0
                else:
                    self.bad_epochs += 1
                summary["stop"] = self.bad_epochs >= self.config.patience
        self._log([summary])
        return summary

    def _log(self, records):
        if self.run_dir is None:
            return
        self.run_dir.mkdir(parents=True, exist_ok=True)
        with open(self.run_dir / "logs.jsonl", "a") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")

    # -- persistence -------------------------------------------------------
    def state(self):
        meta = {
            "format": FORMAT,
            "variant": self.variant.variant,
            "metrics": list(self.selection.names),
            "architecture": self.arch.to_dict(),
            "config": self.config.to_dict(),
            "epoch": self.epoch,
            "rng_state": self.rng.bit_generator.state,
            "adam_steps": {"G": self.g_store.step, "D": self.d_store.step},
            "early_stop": {"best": self.best_heldout, "bad_epochs": self.bad_epochs},
            "best_generator": {"epoch": self.best_g["epoch"], "score": self.best_g["score"]},
        }
        tensors = {}
        for prefix, store in (("G", self.g_store), ("D", self.d_store)):
            for name, p in store.params.items():
                tensors[f"{prefix}/{name}"] = p.data
            for name in store.params:
                tensors[f"{prefix}.adam_m/{name}"] = store.m[name]
                tensors[f"{prefix}.adam_v/{name}"] = store.v[name]
        for name, buf in self.D.named_buffers():
            tensors[f"D.buffer/{name}"] = buf
        if self.best_g["params"] is not None:
            for name, value in self.best_g["params"].items():
                tensors[f"G.best/{name}"] = value
        return meta, tensors

    def save(self, path) -> Path:
        meta, tensors = self.state()
        return save_checkpoint(path, meta, tensors)

    def load_state(self, meta, tensors):
        check_architecture(meta, self.arch)
        if meta.get("variant") != self.variant.variant:
            raise ConfigError(f"checkpoint variant {meta.get('variant')} != configured {self.variant.variant}")
        for prefix, store in (("G", self.g_store), ("D", self.d_store)):
            _assign(store.params, tensors, prefix)
            m = {k: tensors[f"{prefix}.adam_m/{k}"] for k in store.params}
            v = {k: tensors[f"{prefix}.adam_v/{k}"] for k in store.params}
            store.load_state(meta["adam_steps"][prefix], m, v)
        for name, _ in list(self.D.named_buffers()):
            self.D.set_buffer(name, tensors[f"D.buffer/{name}"])
        self.rng.bit_generator.state = meta["rng_state"]
        self.epoch = int(meta["epoch"])
        self.best_heldout = meta["early_stop"]["best"]
        self.bad_epochs = int(meta["early_stop"]["bad_epochs"])
        best = meta.get("best_generator", {"epoch": 0, "score": None})
        params = None
        if best["score"] is not None:
            params = {k: tensors[f"G.best/{k}"].astype(DTYPE) for k in self.g_store.params}
        self.best_g = {"epoch": int(best["epoch"]), "score": best["score"], "params": params}

    @classmethod
    def resume(cls, path, config: RunConfig, train, heldout=(), run_dir=None) -> "Trainer":
        meta, tensors = load_checkpoint(path)
        trainer = cls(config, train, heldout, run_dir)
        trainer.load_state(meta, tensors)
        trainer.last_checkpoint = Path(path)
        return trainer


def check_architecture(meta: dict, arch: Architecture):
    if meta.get("format") != FORMAT:
        raise DataError("checkpoint does not hold an iMetricGAN model")
    stored = Architecture.from_dict(meta["architecture"])
    if stored != arch:
        raise ConfigError(f"checkpoint architecture {stored} does not match configured {arch}")


def _assign(params, tensors, prefix):
    for name, p in params.items():
        key = f"{prefix}/{name}"
        if key not in tensors:
            raise DataError(f"checkpoint is missing tensor {key}")
        if tensors[key].shape != p.data.shape:
            raise ConfigError(f"tensor {key} has shape {tensors[key].shape}, model expects {p.data.shape}")
        p.data[...] = tensors[key]


def load_generator(path, which="best"):
    """Rebuild the generator stored in a checkpoint; returns ``(G, metadata)``.

    ``which="best"`` picks the weights with the best held-out metric score
    when the checkpoint holds them, otherwise the latest weights.
    """
    if which not in ("best", "final"):
        raise ConfigError("generator choice must be 'best' or 'final'")
    meta, tensors = load_checkpoint(path)
    if meta.get("format") != FORMAT:
        raise DataError(f"{path}: not an iMetricGAN checkpoint")
    arch = Architecture.from_dict(meta["architecture"])
    G = Generator(arch, np.random.default_rng(0), DTYPE)
    best = which == "best" and meta.get("best_generator", {}).get("score") is not None
    _assign(dict(G.named_parameters()), tensors, "G.best" if best else "G")
    meta["generator_epoch"] = meta["best_generator"]["epoch"] if best else meta["epoch"]
    return G, meta


def load_discriminator(path):
    meta, tensors = load_checkpoint(path)
    arch = Architecture.from_dict(meta["architecture"])
    D = Discriminator(arch, np.random.default_rng(0), DTYPE)
    _assign(dict(D.named_parameters()), tensors, "D")
    for name, _ in list(D.named_buffers()):
        D.set_buffer(name, tensors[f"D.buffer/{name}"])
    return D, meta
