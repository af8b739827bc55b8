"""Named-tensor checkpoint container.

Layout of a checkpoint file:

    bytes 0..3    magic b"RLTC"
    bytes 4..7    format version, little-endian uint32 (currently 1)
    bytes 8..11   header length N, little-endian uint32
    bytes 12..12+N-1   header, UTF-8 JSON
    remaining     tensor payload, concatenated little-endian float32, C order

The header is ``{"meta": {...}, "tensors": [{"name", "shape", "offset",
"nbytes"}, ...]}`` with offsets relative to the payload start. Writes are
atomic (temp file + rename) so a crash never leaves a partial checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from typing import Mapping

import numpy as np

from .errors import FormatError

MAGIC = b"RLTC"
VERSION = 1


def save_tensors(path, tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float32 tensors plus a JSON metadata record, atomically."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr32 = np.ascontiguousarray(arr, dtype=np.float32)
        blob = arr32.astype("<f4", copy=False).tobytes()
        entries.append(
            {"name": name, "shape": list(arr32.shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "tensors": entries}).encode("utf-8")

    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back into (name -> float32 array, metadata).

    Raises FormatError on a bad magic/version/header, and on truncation names
    the first tensor whose payload is missing or incomplete.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint container (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    (header_len,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + header_len:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from exc

    payload = raw[12 + header_len :]
    tensors: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        name = entry["name"]
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise FormatError(f"{path}: truncated payload, tensor {name!r} incomplete")
        arr = np.frombuffer(payload[start : start + nbytes], dtype="<f4")
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise FormatError(f"{path}: tensor {name!r} size does not match shape {shape}")
        tensors[name] = arr.reshape(shape).copy()
    return tensors, header.get("meta", {})
