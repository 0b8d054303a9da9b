"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"IMGN" | u32 version | u32 meta_len | meta (UTF-8 JSON, sorted keys)
    | u32 n_tensors | n_tensors x [u16 name_len | name | u8 ndim | ndim x u32 | float32 data]
    | u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"IMGN"
VERSION = 1


def encode_checkpoint(metadata: dict, tensors: dict) -> bytes:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f4")  # ascontiguousarray would promote 0-d to 1-d
        raw_name = name.encode()
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(blob: bytes, source="checkpoint"):
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise DataError(f"{source}: bad magic, not an IMGN checkpoint")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise DataError(f"{source}: CRC mismatch, file is corrupt")
    version, meta_len = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise DataError(f"{source}: unsupported checkpoint version {version} (expected {VERSION})")
    pos = 12
    try:
        metadata = json.loads(body[pos : pos + meta_len].decode())
        pos += meta_len
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            tensors[name] = np.frombuffer(body, dtype="<f4", count=n, offset=pos).reshape(shape).copy()
            pos += 4 * n
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{source}: truncated or malformed tensor block ({exc})") from None
    if pos != len(body):
        raise DataError(f"{source}: {len(body) - pos} trailing bytes")
    return metadata, tensors


def save_checkpoint(path, metadata: dict, tensors: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(metadata, tensors))
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    return decode_checkpoint(blob, str(path))
