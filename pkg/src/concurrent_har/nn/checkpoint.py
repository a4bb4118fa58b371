"""Versioned binary checkpoints.

Layout::

    8 bytes   magic  b"CHARCKPT"
    uint32    format version (little-endian)
    uint32    manifest length in bytes
    manifest  UTF-8 JSON: {"parameters": [{"name", "shape", "dtype"}, ...], "meta": {...}}
    payload   raw little-endian values, in manifest order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"CHARCKPT"
VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(path, arrays, meta=None):
    """Write ``arrays`` (name -> ndarray) plus free-form JSON ``meta``."""
    manifest = {"parameters": [], "meta": meta or {}}
    chunks = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported checkpoint dtype {dtype} for {name!r}")
        manifest["parameters"].append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes())
    blob = json.dumps(manifest).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for c in chunks:
            fh.write(c)
    return path


def load_checkpoint(path):
    """Return ``(arrays, meta)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:8]!r}", offset=0, path=path)
    if len(raw) < 16:
        raise FormatError("truncated checkpoint header", offset=len(raw), path=path)
    version, mlen = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=8, path=path)
    try:
        manifest = json.loads(raw[16 : 16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable manifest: {exc}", offset=16, path=path) from None
    offset = 16 + mlen
    arrays = {}
    for entry in manifest["parameters"]:
        dt = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dt.itemsize
        if offset + nbytes > len(raw):
            raise FormatError(
                f"parameter {entry['name']!r} needs {nbytes} bytes, "
                f"{len(raw) - offset} remain", offset=offset, path=path
            )
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=offset)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} trailing bytes", offset=offset, path=path)
    return arrays, manifest.get("meta", {})
