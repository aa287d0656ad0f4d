"""Binary PPM (P6, 8-bit) frame sequences.

Frames live on disk as zero-padded numeric names (000000.ppm, 000001.ppm,
...) inside a directory; in memory they are (C, H, W) float arrays in
[0, 1]. Writing clips to [0, 1] and rounds to the nearest 8-bit code.
"""
from __future__ import annotations

import os
import re

import numpy as np


class PPMError(ValueError):
    pass


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P6"):
        raise PPMError(f"{path}: not a binary PPM (P6)")
    # header: magic, width, height, maxval -- whitespace/comment separated
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PPMError(f"{path}: truncated header")
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise PPMError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
    expected = width * height * 3
    raster = blob[pos:pos + expected]
    if len(raster) != expected:
        raise PPMError(f"{path}: raster is {len(raster)} bytes, expected {expected}")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return img.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path: str | os.PathLike, frame: np.ndarray) -> None:
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise PPMError(f"PPM frames are (3, H, W), got {frame.shape}")
    _, h, w = frame.shape
    data = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(data.transpose(1, 2, 0).tobytes())


_FRAME_RE = re.compile(r"^(\d+)\.ppm$")


def frame_paths(directory: str | os.PathLike) -> list[str]:
    names = []
    for name in os.listdir(directory):
        m = _FRAME_RE.match(name)
        if m:
            names.append((int(m.group(1)), name))
    names.sort()
    return [os.path.join(directory, name) for _, name in names]


def read_sequence(directory: str | os.PathLike) -> np.ndarray:
    """All frames of a directory as (T, C, H, W); sizes must agree."""
    paths = frame_paths(directory)
    if not paths:
        raise PPMError(f"no *.ppm frames in {directory}")
    frames = [read_ppm(p) for p in paths]
    shape = frames[0].shape
    for p, f in zip(paths, frames):
        if f.shape != shape:
            raise PPMError(f"{p}: size {f.shape[1:]} differs from {shape[1:]}")
    return np.stack(frames)


def write_sequence(directory: str | os.PathLike, frames: np.ndarray) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i in range(frames.shape[0]):
        path = os.path.join(directory, f"{i:06d}.ppm")
        write_ppm(path, frames[i])
        paths.append(path)
    return paths
