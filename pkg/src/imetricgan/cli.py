"""Command-line entry point: ``imetricgan {toy-corpus,prepare,train,enhance,evaluate,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 training divergence.  Errors are written to stderr with a stable prefix.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, dsp, refmod
from .config import RunConfig
from .data.manifest import load_sample, prepare, read_manifest, write_manifest
from .data.toy import NOISE_KINDS, write_toy_corpus
from .data.wavio import read_wav, write_wav
from .errors import ConfigError, DataError, DivergenceError, MetricError, ShapeError, SignalError
from .gan.pipeline import enhance
from .gan.train import Trainer, load_generator, resolve_architecture
from .metrics import q_scores

logger = logging.getLogger("imetricgan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
RESULT_FIELDS = ("utterance_id", "snr_db", "condition", "estoi", "siib_raw", "siib_norm")
RMS_TOLERANCE_DB = 0.1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"usage error: {message}\n")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- toy-corpus ------------------------------------------------------------------

def cmd_toy_corpus(args) -> int:
    speech_dir, noise_dir = write_toy_corpus(
        args.out, n_speech=args.n_speech, noise_kinds=tuple(args.noise_kinds), seed=args.seed)
    print(f"wrote {args.n_speech} utterances to {speech_dir} and {len(args.noise_kinds)} maskers to {noise_dir}")
    return EXIT_OK


# -- prepare ---------------------------------------------------------------------

def cmd_prepare(args) -> int:
    rows = prepare(args.speech_dir, args.noise_dir, args.out, snr_grid=args.snr_grid, seed=args.seed,
                   with_examples=args.with_examples, heldout_fraction=args.heldout_fraction,
                   test_fraction=args.test_fraction)
    counts = {k: sum(r.split == k for r in rows) for k in ("train", "heldout", "test")}
    print(f"{len(rows)} mixtures ({', '.join(f'{v} {k}' for k, v in counts.items())}) -> {Path(args.out) / 'manifest.jsonl'}")
    return EXIT_OK


# -- train -----------------------------------------------------------------------

def _load_config(args) -> RunConfig:
    saved = Path(args.run_dir) / "config.json" if getattr(args, "resume", None) else None
    if args.config:
        config = RunConfig.load(args.config)
    elif saved is not None and saved.exists():
        config = RunConfig.load(saved)  # resuming: reuse the run's own configuration
    else:
        config = RunConfig()
    d = config.to_dict()
    for key in ("epochs", "seed", "variant"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    if getattr(args, "manifest", None):
        d["paths"] = dict(d["paths"], manifest=str(Path(args.manifest).resolve()))
    return RunConfig.from_dict(d)


def _latest_checkpoint(run_dir: Path):
    ckpts = sorted((run_dir / "ckpt").glob("epoch_*.imgn"), key=lambda p: int(p.stem.split("_")[1]))
    if not ckpts:
        raise DataError(f"no checkpoints under {run_dir / 'ckpt'}")
    return ckpts[-1]


def cmd_train(args) -> int:
    config = _load_config(args)
    arch = resolve_architecture(config.architecture, config.variant_config.selection.k)
    if args.dry_run:
        print(f"variant {config.variant} metrics {'+'.join(config.variant_config.selection.names)}")
        print(f"generator parameters: {arch.generator_param_count()}")
        print(f"discriminator parameters: {arch.discriminator_param_count()}")
        return EXIT_OK

    manifest = config.paths.get("manifest")
    if not manifest:
        raise UsageError("no manifest: pass --manifest or set paths.manifest in the config")
    run_dir = Path(args.run_dir)
    if (run_dir / "logs.jsonl").exists() and not args.resume:
        raise UsageError(f"{run_dir} already holds a run; pass --resume to continue it")
    rows = read_manifest(manifest)
    train = [load_sample(r) for r in rows if r.split == "train"]
    heldout = [load_sample(r) for r in rows if r.split == "heldout"]

    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(config.to_json() + "\n")
    write_manifest(run_dir / "manifest.jsonl", rows)
    if args.resume:
        ckpt = _latest_checkpoint(run_dir) if args.resume == "latest" else Path(args.resume)
        trainer = Trainer.resume(ckpt, config, train, heldout, run_dir=run_dir)
        logger.info("resumed from %s at epoch %d", ckpt, trainer.epoch)
    else:
        trainer = Trainer(config, train, heldout, run_dir=run_dir)

    def report(t, summary):
        held = summary.get("heldout_d_mse")
        held = f" heldout_d_mse {held:.5f}" if held is not None else ""
        if "heldout_q_model" in summary:
            held += f" heldout_q {summary['heldout_q_model']:.4f} (plain {summary['heldout_q_plain']:.4f})"
        print(f"epoch {summary['epoch']}: d_loss {summary['d_loss']:.5f} g_loss {summary['g_loss']:.5f}{held}", flush=True)

    trainer.fit(on_epoch=report)
    print(f"checkpoints in {run_dir / 'ckpt'}")
    return EXIT_OK


# -- enhance ---------------------------------------------------------------------

def _enhance_checked(label, speech, noise, G, domain):
    out = enhance(speech, noise, G, domain)
    change = dsp.db_change(speech, out)
    if len(out) != len(speech) or abs(change) > RMS_TOLERANCE_DB:
        raise SignalError(f"{label}: constraint violated (length {len(out)}/{len(speech)}, RMS change {change:+.4f} dB)")
    logger.info("%s: %d samples, RMS Δ %+.4f dB ≤ %.1f dB", label, len(out), change, RMS_TOLERANCE_DB)
    return out


def cmd_enhance(args) -> int:
    G, meta = load_generator(args.checkpoint, args.weights)
    domain = meta.get("config", {}).get("mask_domain", "compressed")
    if args.manifest:
        if not args.out_dir:
            raise UsageError("--manifest needs --out-dir")
        rows = [r for r in read_manifest(args.manifest) if args.split in (None, r.split)]
        for row in rows:
            s = load_sample(row)
            out = _enhance_checked(row.id, s.speech, s.noise, G, domain)
            write_wav(Path(args.out_dir) / f"{row.id}.wav", out, bit_depth=32)
        print(f"enhanced {len(rows)} utterances -> {args.out_dir}")
        return EXIT_OK
    if not (args.speech and args.noise and args.out):
        raise UsageError("give --speech, --noise and --out, or --manifest with --out-dir")
    speech, noise = read_wav(args.speech), read_wav(args.noise)
    if noise.sample_rate != speech.sample_rate:
        raise DataError("speech and noise sample rates differ")
    if args.snr is not None:
        noise = dsp.scale_noise_to_snr(speech, noise, args.snr, args.seed)
    elif len(noise) != len(speech):
        noise, _ = dsp.crop_noise(noise, len(speech), args.seed)
    out = _enhance_checked(Path(args.speech).stem, speech, noise, G, domain)
    write_wav(args.out, out, bit_depth=32)
    print(f"wrote {args.out}")
    return EXIT_OK


# -- evaluate --------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir) if args.run_dir else None
    ckpt = Path(args.checkpoint) if args.checkpoint else (_latest_checkpoint(run_dir) if run_dir else None)
    if ckpt is None:
        raise UsageError("give --run-dir or --checkpoint")
    G, meta = load_generator(ckpt, args.weights)
    cfg = meta.get("config", {})
    domain = cfg.get("mask_domain", "compressed")
    r_max = args.r_max if args.r_max is not None else cfg.get("r_max", RunConfig.r_max)
    manifest = args.manifest or (run_dir / "manifest.jsonl" if run_dir else None)
    if manifest is None:
        raise UsageError("give --manifest when evaluating a bare checkpoint")
    all_rows = read_manifest(manifest)
    if args.split is None:
        args.split = "test" if any(r.split == "test" for r in all_rows) else "heldout"
    rows = [r for r in all_rows if r.split == args.split]
    if not rows:
        raise DataError(f"manifest has no rows in split {args.split!r}")

    results = []
    for row in rows:
        s = load_sample(row)
        example = s.enhanced_example if s.enhanced_example is not None else refmod.make_example(s.speech)
        conditions = (("plain", s.speech), ("refmod", example),
                      (args.label, _enhance_checked(row.id, s.speech, s.noise, G, domain)))
        for name, wave in conditions:
            try:
                q = q_scores(wave, s.speech, s.noise, r_max=r_max)
            except MetricError as exc:
                logger.warning("%s/%s skipped: %s", row.id, name, exc)
                continue
            results.append({"utterance_id": row.id, "snr_db": row.snr_db, "condition": name,
                            "estoi": q.estoi, "siib_raw": q.siib_raw, "siib_norm": q.siib_norm})
    out = Path(args.out) if args.out else (run_dir / "results.csv" if run_dir else None)
    text = _results_csv(results)
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"{len(results)} scores -> {out}")
    return EXIT_OK


def _results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


# -- report ----------------------------------------------------------------------

def read_results(paths) -> list[dict]:
    rows = []
    for path in paths:
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                missing = set(RESULT_FIELDS) - set(reader.fieldnames or ())
                if missing:
                    raise DataError(f"{path}: missing columns {sorted(missing)}")
                for lineno, r in enumerate(reader, 2):
                    try:
                        rows.append({**r, "estoi": float(r["estoi"]), "siib_raw": float(r["siib_raw"]),
                                     "siib_norm": float(r["siib_norm"]), "snr_db": float(r["snr_db"])})
                    except (TypeError, ValueError):
                        raise DataError(f"{path}:{lineno}: non-numeric score") from None
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError("no result rows to report")
    return rows


def condition_means(rows) -> list[dict]:
    """Per-condition means, plain first, then refmod, then the rest in first-seen order."""
    order = []
    for r in rows:
        if r["condition"] not in order:
            order.append(r["condition"])
    order.sort(key=lambda c: {"plain": 0, "refmod": 1}.get(c, 2))
    table = []
    for cond in order:
        sel = [r for r in rows if r["condition"] == cond]
        table.append({
            "condition": cond,
            "n": len(sel),
            "estoi": float(np.mean([r["estoi"] for r in sel])),
            "siib": float(np.mean([r["siib_norm"] for r in sel])),
            "siib_raw": float(np.mean([r["siib_raw"] for r in sel])),
        })
    return table


def format_table(table) -> str:
    width = max(len("Algorithms"), *(len(t["condition"]) for t in table))
    lines = [f"{'Algorithms':<{width}}  {'ESTOI':>6}  {'SIIB':>6}  {'SIIB b/s':>9}  {'n':>4}"]
    rule = "-" * len(lines[0])
    lines.insert(0, rule)
    lines.append(rule)
    for t in table:
        lines.append(f"{t['condition']:<{width}}  {t['estoi']:6.3f}  {t['siib']:6.3f}  {t['siib_raw']:9.1f}  {t['n']:>4}")
        if t["condition"] in ("plain", "refmod"):
            lines.append(rule)
    if lines[-1] != rule:
        lines.append(rule)
    return "\n".join(lines) + "\n"


def table_csv(table) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=("condition", "n", "estoi", "siib", "siib_raw"), lineterminator="\n")
    w.writeheader()
    for t in table:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in t.items()})
    return buf.getvalue()


def save_figure(table, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [t["condition"] for t in table]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(1.2 * len(names) + 2, 3))
    ax.bar(x - 0.2, [t["estoi"] for t in table], 0.4, label="ESTOI")
    ax.bar(x + 0.2, [t["siib"] for t in table], 0.4, label="SIIB (normalised)")
    ax.set_xticks(x, names)
    ax.set_ylim(0, 1)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_report(args) -> int:
    table = condition_means(read_results(args.results))
    text = format_table(table)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.csv").write_text(table_csv(table))
        (out / "table.txt").write_text(text)
        if args.figure:
            save_figure(table, out / "table.png")
    elif args.figure:
        raise UsageError("--figure needs --out-dir")
    else:
        sys.stdout.write(table_csv(table) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


# -- wiring ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="imetricgan", description="Noise-adaptive speech intelligibility enhancement.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("toy-corpus", help="synthesise a small speech/noise WAV corpus")
    s.add_argument("out", help="directory that receives speech/ and noise/")
    s.add_argument("--n-speech", type=int, default=60, help="number of utterances (default 60)")
    s.add_argument("--noise-kinds", nargs="+", choices=NOISE_KINDS, default=[NOISE_KINDS[0]],
                   help="masker types to write (default speech_shaped)")
    s.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    s.set_defaults(func=cmd_toy_corpus)

    s = sub.add_parser("prepare", help="mix speech with noise crops and write a manifest")
    s.add_argument("--speech-dir", required=True, help="folder of clean speech WAVs")
    s.add_argument("--noise-dir", required=True, help="folder of masker WAVs")
    s.add_argument("--out", required=True, help="output folder for manifest.jsonl, mixtures/ and enhanced/")
    s.add_argument("--snr-grid", type=_float_list, default=[-5.0, 0.0, 5.0], help="comma-separated SNRs in dB")
    s.add_argument("--seed", type=int, default=0, help="seed for noise crops and the held-out split")
    s.add_argument("--with-examples", action="store_true", help="also write rule-based enhanced examples")
    s.add_argument("--heldout-fraction", type=float, default=0.2,
                   help="fraction of utterances held out for early stopping and model selection")
    s.add_argument("--test-fraction", type=float, default=0.0, help="fraction of utterances reserved for testing")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="train a variant; writes config, logs and checkpoints to the run directory")
    s.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    s.add_argument("--run-dir", required=True, help="output run directory")
    s.add_argument("--manifest", help="manifest.jsonl from prepare (overrides paths.manifest)")
    s.add_argument("--variant", choices=("SiibGAN-zs", "SiibGAN", "MultiGAN"), help="override the configured variant")
    s.add_argument("--epochs", type=int, help="override the configured epoch count")
    s.add_argument("--seed", type=int, help="override the configured seed")
    s.add_argument("--resume", nargs="?", const="latest", help="continue from a checkpoint (default: latest in run dir)")
    s.add_argument("--dry-run", action="store_true", help="validate the config and print parameter counts")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("enhance", help="enhance speech for a given masker with a trained generator")
    s.add_argument("--checkpoint", required=True, help="checkpoint (.imgn) holding the generator")
    s.add_argument("--weights", choices=("best", "final"), default="best",
                   help="generator weights: best held-out score (default) or the latest epoch")
    s.add_argument("--speech", help="clean speech WAV")
    s.add_argument("--noise", help="masker WAV (cropped to the speech length when longer)")
    s.add_argument("--snr", type=float, help="rescale the masker to this SNR in dB first")
    s.add_argument("--seed", type=int, default=0, help="seed for the noise crop")
    s.add_argument("--out", help="output WAV")
    s.add_argument("--manifest", help="enhance every manifest row instead of one file")
    s.add_argument("--split", choices=("train", "heldout", "test"), help="restrict --manifest to one split")
    s.add_argument("--out-dir", help="output folder for --manifest mode")
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("evaluate", help="score plain, refmod and model conditions per utterance")
    s.add_argument("--run-dir", help="run directory (latest checkpoint, manifest and results.csv)")
    s.add_argument("--checkpoint", help="explicit checkpoint instead of the run's latest")
    s.add_argument("--weights", choices=("best", "final"), default="best",
                   help="generator weights: best held-out score (default) or the latest epoch")
    s.add_argument("--manifest", help="explicit manifest instead of the run's copy")
    s.add_argument("--split", choices=("train", "heldout", "test"),
                   help="rows to score (default: test when the manifest has any, else heldout)")
    s.add_argument("--label", default="model", help="condition name for the generator output")
    s.add_argument("--r-max", type=float, help="SIIB normalisation ceiling in b/s (default from the run config)")
    s.add_argument("--out", help="output CSV (default run-dir/results.csv, else stdout)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="condition-averaged score table from evaluate CSVs")
    s.add_argument("results", nargs="+", help="one or more results CSVs")
    s.add_argument("--out-dir", help="write table.csv and table.txt here")
    s.add_argument("--figure", action="store_true", help="also render table.png (needs --out-dir)")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "enhance" and not args.verbose:
        logging.getLogger("imetricgan").setLevel(logging.INFO)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        where = f" (last checkpoint: {exc.last_checkpoint})" if exc.last_checkpoint else ""
        print(f"diverged: {exc}{where}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, SignalError, ShapeError, MetricError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
