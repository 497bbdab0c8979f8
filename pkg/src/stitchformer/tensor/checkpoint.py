"""Single-file checkpoint format.

Layout (all integers little-endian)::

    magic       8 bytes   b"SFCKPT\\x00\\x00"
    version     uint32
    precision   uint8     0 = float32, 1 = float64
    manifest    uint64 length, then UTF-8 JSON:
                {"config": {...}, "entries": [{"name", "shape", "offset", "nbytes"}],
                 "blob_sha256": hex}
    blobs       raw little-endian values, concatenated in manifest order
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptionError, FormatError

MAGIC = b"SFCKPT\x00\x00"
VERSION = 1
_PRECISIONS = {0: "<f4", 1: "<f8"}


def save_checkpoint(path, arrays: dict, config: dict | None = None, precision: str = "float64") -> None:
    flag = 1 if precision == "float64" else 0
    dtype = np.dtype(_PRECISIONS[flag])
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(np.asarray(arr), dtype=dtype).tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    blob = b"".join(blobs)
    manifest = json.dumps({"config": config or {}, "entries": entries,
                           "blob_sha256": hashlib.sha256(blob).hexdigest()},
                          sort_keys=True).encode("utf-8")
    header = MAGIC + struct.pack("<IBQ", VERSION, flag, len(manifest))
    Path(path).write_bytes(header + manifest + blob)


def load_checkpoint(path):
    """Return ``(arrays, config, precision)``; raises on any integrity failure."""
    raw = Path(path).read_bytes()
    head = len(MAGIC) + struct.calcsize("<IBQ")
    if len(raw) < head:
        raise CorruptionError(f"{path}: truncated header")
    if raw[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    version, flag, mlen = struct.unpack("<IBQ", raw[len(MAGIC):head])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if flag not in _PRECISIONS:
        raise CorruptionError(f"{path}: bad precision flag {flag}")
    if len(raw) < head + mlen:
        raise CorruptionError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[head:head + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"{path}: unreadable manifest ({exc})") from None
    blob = raw[head + mlen:]
    if hashlib.sha256(blob).hexdigest() != manifest.get("blob_sha256"):
        raise CorruptionError(f"{path}: payload hash mismatch")
    dtype = np.dtype(_PRECISIONS[flag])
    arrays = {}
    for e in manifest["entries"]:
        chunk = blob[e["offset"]:e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CorruptionError(f"{path}: entry {e['name']} truncated")
        arrays[e["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(e["shape"]).copy()
    return arrays, manifest["config"], "float64" if flag == 1 else "float32"
