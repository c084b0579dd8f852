"""Versioned flat binary parameter files.

Layout::

    bytes 0..7    magic b"HGANPAR\\0"
    bytes 8..11   format version, uint32 little-endian (currently 1)
    bytes 12..15  header length N, uint32 little-endian
    next N bytes  UTF-8 JSON header: {"dtype": "<f8", "meta": {...},
                  "tensors": [{"name": str, "shape": [int, ...]}, ...]}
    remainder     tensors in header order, row-major little-endian float64

The header is written with sorted keys and no whitespace so identical
parameters always give identical bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"HGANPAR\0"
VERSION = 1


def params_to_bytes(params, meta=None) -> bytes:
    header = {
        "dtype": "<f8",
        "meta": meta or {},
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.values())
    return MAGIC + struct.pack("<II", VERSION, len(hb)) + hb + body


def params_from_bytes(data: bytes):
    """Return ``(params, meta)``."""
    if data[:8] != MAGIC:
        raise FormatError("not a parameter file (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise FormatError(f"unsupported parameter file version {version}")
    header = json.loads(data[16:16 + hlen])
    offset = 16 + hlen
    params = {}
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        n = int(np.prod(shape)) if shape else 1
        end = offset + 8 * n
        if end > len(data):
            raise FormatError(f"parameter file truncated in tensor {t['name']}")
        params[t["name"]] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(float)
        offset = end
    if offset != len(data):
        raise FormatError("trailing bytes after last tensor")
    return params, header.get("meta", {})


def save_params(path, params, meta=None):
    Path(path).write_bytes(params_to_bytes(params, meta))


def load_params(path):
    return params_from_bytes(Path(path).read_bytes())


def assign_params(target, source):
    """Copy ``source`` arrays into the model's ``named_params()`` in place."""
    dest = target.named_params()
    missing = set(dest) - set(source)
    extra = set(source) - set(dest)
    if missing or extra:
        raise FormatError(f"parameter names differ: missing {sorted(missing)}, extra {sorted(extra)}")
    for k, v in dest.items():
        if v.shape != source[k].shape:
            raise FormatError(f"{k}: shape {source[k].shape}, expected {v.shape}")
        v[...] = source[k]
    target.touch()
