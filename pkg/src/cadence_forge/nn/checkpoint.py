"""``CKPT`` files: magic, JSON header, then little-endian f32 blobs in header order."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"CKPT"
_LEN = struct.Struct("<I")


def save_checkpoint(path, state: dict, metadata: dict | None = None) -> None:
    entries = [{"name": k, "shape": list(np.shape(v))} for k, v in state.items()]
    header = json.dumps({"tensors": entries, "metadata": metadata or {}}, sort_keys=True).encode()
    blobs = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in state.values())
    Path(path).write_bytes(MAGIC + _LEN.pack(len(header)) + header + blobs)


def load_checkpoint(path) -> tuple[dict, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a CKPT file")
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    (n,) = _LEN.unpack_from(raw, 4)
    try:
        header = json.loads(raw[8:8 + n])
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupt JSON header") from exc
    offset = 8 + n
    state = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if offset + 4 * count > len(raw):
            raise FormatError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        state[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
        offset += 4 * count
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return state, header["metadata"]


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]
