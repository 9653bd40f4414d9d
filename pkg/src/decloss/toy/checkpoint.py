"""Checkpoint container.

Layout::

    b"DECL1"                 magic
    uint32 little-endian     header length in bytes
    header                   UTF-8 JSON: version, scale, blocks, config
    payload                  concatenated little-endian float64 blocks

Each entry of ``blocks`` is ``{"name", "shape", "offset", "nbytes"}`` with
offsets relative to the start of the payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import FormatError
from .model import ToyModelParams

MAGIC = b"DECL1"
VERSION = 1


def save_checkpoint(path, params: ToyModelParams, config: Optional[dict] = None) -> None:
    blocks = []
    chunks = []
    offset = 0
    for name, arr in params.arrays().items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        blocks.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"version": VERSION, "scale": params.scale, "blocks": blocks, "config": config or {}},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path) -> tuple:
    """Returns ``(params, header)``."""
    blob = Path(path).read_bytes()
    if blob[:5] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    try:
        (hlen,) = struct.unpack("<I", blob[5:9])
        header = json.loads(blob[9:9 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header") from exc
    if header.get("version") != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
    payload = blob[9 + hlen:]
    arrays = {}
    for block in header["blocks"]:
        start, n = block["offset"], block["nbytes"]
        if start + n > len(payload):
            raise FormatError(f"{path}: block {block['name']!r} is truncated")
        arr = np.frombuffer(payload[start:start + n], dtype="<f8").astype(np.float64)
        arrays[block["name"]] = arr.reshape(block["shape"])
    missing = set(ToyModelParams.names()) - set(arrays)
    if missing:
        raise FormatError(f"{path}: missing parameter blocks {sorted(missing)}")
    return ToyModelParams.from_arrays(arrays, int(header["scale"])), header
