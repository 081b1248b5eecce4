"""CFH1 parameter files.

Layout: the 4-byte magic ``CFH1``, a little-endian uint32 byte length, that
many bytes of UTF-8 JSON manifest, then every tensor listed under
``manifest["tensors"]`` as raw little-endian float64 in manifest order.
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CFH1"


class FormatError(ValueError):
    pass


def write_cfh1(path, manifest: dict, tensors: list[np.ndarray]) -> None:
    entries = manifest.get("tensors", [])
    if len(entries) != len(tensors):
        raise ValueError(f"manifest lists {len(entries)} tensors, got {len(tensors)}")
    for entry, t in zip(entries, tensors):
        if list(t.shape) != list(entry["shape"]):
            raise ValueError(f"tensor {entry['name']!r} has shape {list(t.shape)}, manifest says {entry['shape']}")
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def read_cfh1(path) -> tuple[dict, list[np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a CFH1 file (magic {blob[:4]!r})")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    (n,) = struct.unpack("<I", blob[4:8])
    try:
        manifest = json.loads(blob[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable manifest: {exc}") from exc
    offset = 8 + n
    tensors = []
    for entry in manifest.get("tensors", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(blob):
            raise FormatError(f"{path}: data ends inside tensor {entry['name']!r}")
        tensors.append(np.frombuffer(blob[offset:end], dtype="<f8").astype(np.float64).reshape(shape))
        offset = end
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes after last tensor")
    return manifest, tensors
