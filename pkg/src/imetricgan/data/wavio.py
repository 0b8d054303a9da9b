"""WAV reading and writing (PCM16 and IEEE float32, mono)."""

from __future__ import annotations

import logging
import struct
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ..dsp import Waveform
from ..errors import DataError

logger = logging.getLogger(__name__)


def read_wav(path) -> Waveform:
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path, mmap=False)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except (ValueError, EOFError, OSError, struct.error, wavfile.WavFileWarning) as exc:
        raise DataError(f"{path}: malformed or unsupported WAV ({exc})") from None

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype} (need PCM16 or float32)")
    if x.ndim == 2:
        logger.warning("%s: %d channels averaged to mono", path, x.shape[1])
        x = x.mean(axis=1)
    if x.size == 0:
        raise DataError(f"{path}: no samples")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite samples")
    return Waveform(x, rate)


def write_wav(path, w: Waveform, bit_depth: int = 16) -> None:
    if bit_depth == 16:
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif bit_depth == 32:
        data = w.samples.astype(np.float32)
    else:
        raise DataError(f"unsupported bit depth {bit_depth} (16 or 32)")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, w.sample_rate, data)
