"""FTT binary tensor files and checkpoint directories.

Layout: magic "FTT1", u8 dtype tag (0=f64, 1=f32), u8 rank, rank x u64
little-endian extents, then the raw little-endian scalars in row-major
order. Checkpoints are a directory of .ftt files plus a manifest.txt with
one "name=filename" line per tensor (and optional "!key=value" metadata
lines, e.g. the training step counter).
"""
from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"FTT1"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_TAGS = {np.dtype("float64"): 0, np.dtype("float32"): 1}


class FormatError(ValueError):
    """Malformed or truncated FTT payload."""


def write_ftt(path: str | os.PathLike, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _TAGS:
        arr = arr.astype(np.float64)
    tag = _TAGS[arr.dtype]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", tag, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype(_DTYPES[tag], copy=False).tobytes(order="C"))


def read_ftt(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 6:
        raise FormatError(f"{path}: truncated header")
    tag, rank = struct.unpack_from("<BB", blob, 4)
    if tag not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype tag {tag}")
    offset = 6
    if len(blob) < offset + 8 * rank:
        raise FormatError(f"{path}: truncated extents")
    shape = struct.unpack_from(f"<{rank}Q", blob, offset)
    offset += 8 * rank
    dtype = _DTYPES[tag]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    expected = offset + count * dtype.itemsize
    if len(blob) != expected:
        raise FormatError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).astype(dtype.newbyteorder("="), copy=True)


def save_tensor_dir(directory: str | os.PathLike, named: dict[str, np.ndarray],
                    meta: dict[str, str] | None = None) -> None:
    """Write a checkpoint directory: one .ftt per tensor plus manifest.txt."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    for key, value in sorted((meta or {}).items()):
        lines.append(f"!{key}={value}")
    for i, (name, array) in enumerate(named.items()):
        filename = f"t{i:04d}.ftt"
        write_ftt(os.path.join(directory, filename), array)
        lines.append(f"{name}={filename}")
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tensor_dir(directory: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read a checkpoint directory back into (tensors, metadata)."""
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.exists(manifest):
        raise FormatError(f"no manifest.txt in {directory}")
    tensors: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    with open(manifest) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("!"):
                key, _, value = line[1:].partition("=")
                meta[key] = value
                continue
            name, _, filename = line.partition("=")
            tensors[name] = read_ftt(os.path.join(directory, filename))
    return tensors, meta
