"""Dataset manifests: mixture preparation and sample loading."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import dsp, refmod
from ..dsp import Waveform
from ..errors import DataError, SignalError
from .wavio import read_wav, write_wav

logger = logging.getLogger(__name__)

SPLITS = ("train", "heldout", "test")


@dataclass(frozen=True)
class ManifestRow:
    id: str
    speech_path: str
    noise_path: str
    snr_db: float
    crop_seed: int
    split: str = "train"
    enhanced_path: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        if d["enhanced_path"] is None:
            del d["enhanced_path"]
        return json.dumps(d, sort_keys=True)


@dataclass
class TrainSample:
    id: str
    speech: Waveform
    noise: Waveform
    snr_db: float
    enhanced_example: Waveform | None = None

    def __post_init__(self):
        if len(self.speech) != len(self.noise):
            raise DataError(f"{self.id}: speech and noise lengths differ")
        if self.enhanced_example is not None and len(self.enhanced_example) != len(self.speech):
            raise DataError(f"{self.id}: enhanced example length differs from speech")


def read_manifest(path) -> list[ManifestRow]:
    rows, seen = [], set()
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            row = ManifestRow(**json.loads(line))
        except (json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: bad manifest record ({exc})") from None
        if row.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate id {row.id!r}")
        if row.split not in SPLITS or not np.isfinite(row.snr_db):
            raise DataError(f"{path}:{lineno}: invalid split or snr_db")
        seen.add(row.id)
        rows.append(row)
    return rows


def write_manifest(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("".join(r.to_json() + "\n" for r in rows))


def _list_wavs(folder, label):
    folder = Path(folder)
    files = sorted(folder.glob("*.wav")) if folder.is_dir() else []
    if not files:
        raise DataError(f"{label} directory {folder} contains no .wav files")
    return files


def prepare(speech_dir, noise_dir, out_dir, snr_grid=(-5.0, 0.0, 5.0), seed=0,
            with_examples=False, heldout_fraction=0.2, write_mixtures=True, test_fraction=0.0) -> list[ManifestRow]:
    """Pair every speech file with a seeded noise crop at each SNR and write ``manifest.jsonl``.

    Utterances (not mixtures) are split, so every SNR of one sentence lands
    in the same split.  ``heldout`` drives early stopping and model selection;
    ``test`` is never seen during training.
    """
    if heldout_fraction < 0 or test_fraction < 0 or heldout_fraction + test_fraction >= 1:
        raise DataError("heldout and test fractions must be non-negative and sum to less than 1")
    out_dir = Path(out_dir)
    speech_files = _list_wavs(speech_dir, "speech")
    noise_files = _list_wavs(noise_dir, "noise")
    bad, speech, noises = [], {}, {}
    for f in speech_files:
        try:
            speech[f] = read_wav(f)
        except DataError as exc:
            bad.append(str(exc))
    for f in noise_files:
        try:
            noises[f] = read_wav(f)
        except DataError as exc:
            bad.append(str(exc))
    if bad:
        raise DataError("unreadable inputs:\n  " + "\n  ".join(bad))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(speech_files))
    n_held = int(round(heldout_fraction * len(speech_files)))
    n_test = int(round(test_fraction * len(speech_files)))
    split_of = {speech_files[i]: "heldout" for i in order[:n_held]}
    split_of.update({speech_files[i]: "test" for i in order[n_held:n_held + n_test]})

    rows = []
    for f in speech_files:
        s = speech[f]
        enhanced_path = None
        if with_examples:
            enhanced_path = out_dir / "enhanced" / f.name
            write_wav(enhanced_path, refmod.make_example(s), bit_depth=32)
        for snr in snr_grid:
            nf = noise_files[int(rng.integers(len(noise_files)))]
            crop_seed = int(rng.integers(2**31 - 1))
            row = ManifestRow(
                id=f"{f.stem}_snr{float(snr):+g}",
                speech_path=str(f.resolve()),
                noise_path=str(nf.resolve()),
                snr_db=float(snr),
                crop_seed=crop_seed,
                split=split_of.get(f, "train"),
                enhanced_path=str(enhanced_path.resolve()) if enhanced_path else None,
            )
            if write_mixtures:
                sample = _build_sample(row, s, noises[nf])
                write_wav(out_dir / "mixtures" / f"{row.id}.wav",
                          s.with_samples(s.samples + sample.noise.samples), bit_depth=32)
            rows.append(row)
    write_manifest(out_dir / "manifest.jsonl", rows)
    return rows


def _build_sample(row: ManifestRow, speech: Waveform, noise: Waveform, enhanced=None) -> TrainSample:
    try:
        scaled = dsp.scale_noise_to_snr(speech, noise, row.snr_db, row.crop_seed)
    except SignalError as exc:
        raise DataError(f"{row.id}: {exc}") from None
    return TrainSample(row.id, speech, scaled, row.snr_db, enhanced)


def load_sample(row: ManifestRow) -> TrainSample:
    speech = read_wav(row.speech_path)
    noise = read_wav(row.noise_path)
    enhanced = read_wav(row.enhanced_path) if row.enhanced_path else None
    for w, label in ((noise, "noise"), (enhanced, "enhanced example")):
        if w is not None and w.sample_rate != speech.sample_rate:
            raise DataError(f"{row.id}: {label} sample rate differs from speech")
    return _build_sample(row, speech, noise, enhanced)


def load_split(rows, split) -> list[TrainSample]:
    return [load_sample(r) for r in rows if r.split == split]
