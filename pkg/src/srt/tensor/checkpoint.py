"""Self-describing binary container for named parameter tensors.

Layout (everything little-endian; see docs/formats.md):

    bytes 0..3    magic b"SRTC"
    bytes 4..7    format version, uint32 (currently 1)
    bytes 8..15   header length in bytes, uint64
    header        UTF-8 JSON: {"meta": <caller dict>, "tensors": [
                      {"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    payload       raw row-major buffers, concatenated at the stated offsets
                  (relative to the end of the header)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .engine import Tensor

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

_MAGIC = b"SRTC"
_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, tensors: Dict[str, object], meta: dict | None = None) -> None:
    """Write named arrays/Tensors plus a JSON `meta` dict to `path`."""
    path = Path(path)
    entries = []
    buffers = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        arr = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
        raw = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        buffers.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "tensors": entries}).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in buffers:
            f.write(raw)
    tmp.replace(path)


def load_checkpoint(path) -> Tuple[dict, Dict[str, np.ndarray]]:
    """Read a container written by save_checkpoint; returns (meta, name -> array)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, 8)
    header = json.loads(blob[16:16 + hlen].decode())
    base = 16 + hlen
    out: Dict[str, np.ndarray] = {}
    for ent in header["tensors"]:
        start = base + ent["offset"]
        raw = blob[start:start + ent["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(ent["dtype"]).newbyteorder("<"))
        out[ent["name"]] = arr.reshape(ent["shape"]).astype(ent["dtype"])
    return header["meta"], out
