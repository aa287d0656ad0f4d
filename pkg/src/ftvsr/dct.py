"""Orthonormal 2D block DCT over image patches and whole frame sequences.

A frame sequence (T, C, H, W) becomes a spectral map (T, F, C, H/B, W/B)
where F = B*B and plane f = u*B + v holds coefficient (u, v) of every BxB
patch. The transform is the orthonormal cosine basis, so energy is
preserved and the inverse is the transpose. Frames are reflect-padded on
the bottom/right to multiples of B; the padding is recorded and removed on
the way back. Everything runs on Tensors, so the transforms are
differentiable linear maps.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ftvsr.ftt import read_ftt, write_ftt
from ftvsr.tensor import ShapeError, Tensor


@lru_cache(maxsize=None)
def basis_matrix(block_size: int) -> np.ndarray:
    """1D orthonormal cosine basis; row u is the u-th frequency atom.

    Entry (u, x) = c(u) * cos((2x+1) u pi / (2B)) with c(0) = sqrt(1/B) and
    c(u>0) = sqrt(2/B), so M @ M.T == I.
    """
    if block_size < 1:
        raise ShapeError("block size must be positive")
    b = block_size
    x = np.arange(b)
    u = np.arange(b)[:, None]
    m = np.cos((2 * x + 1) * u * np.pi / (2 * b))
    scale = np.full((b, 1), np.sqrt(2.0 / b))
    scale[0, 0] = np.sqrt(1.0 / b)
    out = m * scale
    out.flags.writeable = False  # cached; callers must not mutate
    return out


def dct2(patch: Tensor, block_size: int | None = None) -> Tensor:
    """Forward 2D DCT of a single square patch."""
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ShapeError(f"dct2 needs a square patch, got {patch.shape}")
    if block_size is not None and patch.shape[0] != block_size:
        raise ShapeError(f"patch is {patch.shape[0]}, configured block size is {block_size}")
    m = Tensor(basis_matrix(patch.shape[0]))
    return m @ patch @ m.transpose()


def idct2(block: Tensor, block_size: int | None = None) -> Tensor:
    """Inverse 2D DCT; exact inverse of dct2 up to f64 roundoff."""
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise ShapeError(f"idct2 needs a square block, got {block.shape}")
    if block_size is not None and block.shape[0] != block_size:
        raise ShapeError(f"block is {block.shape[0]}, configured block size is {block_size}")
    m = Tensor(basis_matrix(block.shape[0]))
    return m.transpose() @ block @ m


def dct2_batch(patches: np.ndarray) -> np.ndarray:
    """Plain-numpy DCT of a stack (..., B, B); used by non-differentiable paths."""
    m = basis_matrix(patches.shape[-1])
    return np.einsum("ux,...xy,vy->...uv", m, patches, m, optimize=True)


def idct2_batch(blocks: np.ndarray) -> np.ndarray:
    m = basis_matrix(blocks.shape[-1])
    return np.einsum("xu,...uv,yv->...xy", m, blocks, m, optimize=True)


@dataclass
class SpectralMap:
    """Block-DCT representation of a padded frame sequence.

    data is (T, F, C, H/B, W/B) with F = B*B; orig_height/orig_width are the
    pre-padding pixel extents needed to undo the reflect padding.
    """
    data: Tensor
    block_size: int
    frame_height: int     # padded, multiple of block_size
    frame_width: int
    orig_height: int
    orig_width: int

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def freq_count(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def grid_h(self) -> int:
        return self.data.shape[3]

    @property
    def grid_w(self) -> int:
        return self.data.shape[4]

    def replace_data(self, data: Tensor) -> "SpectralMap":
        if data.shape != self.data.shape:
            raise ShapeError(f"replacement data {data.shape} != {self.data.shape}")
        return SpectralMap(data, self.block_size, self.frame_height, self.frame_width,
                           self.orig_height, self.orig_width)


def _reflect_index(length: int, padded: int) -> np.ndarray:
    """Indices implementing bottom/right reflect padding (no edge repeat)."""
    idx = np.arange(padded)
    extra = padded - length
    if extra > 0:
        if length == 1:
            idx[length:] = 0
        else:
            # mirror about the last sample: ..., n-2, n-3, ...
            idx[length:] = length - 2 - np.arange(extra)
            if extra > length - 1:
                raise ShapeError(f"cannot reflect-pad {length} up to {padded}")
    return idx


def pad_to_multiple(frames: Tensor, block_size: int) -> tuple[Tensor, int, int]:
    """Reflect-pad (T, C, H, W) so H and W become multiples of block_size."""
    t, c, h, w = frames.shape
    ph = (block_size - h % block_size) % block_size
    pw = (block_size - w % block_size) % block_size
    if ph == 0 and pw == 0:
        return frames, h, w
    rows = _reflect_index(h, h + ph)
    cols = _reflect_index(w, w + pw)
    # gather via flat indices so the pad stays differentiable
    grid = (rows[:, None] * w + cols[None, :]).reshape(-1)
    offsets = (np.arange(t * c) * (h * w))[:, None]
    flat = (offsets + grid[None, :]).reshape(-1)
    return frames.take(flat).reshape(t, c, h + ph, w + pw), h, w


def to_spectral(frames: Tensor, block_size: int) -> SpectralMap:
    """Per-channel, per-patch DCT of a (T, C, H, W) sequence."""
    if frames.ndim != 4:
        raise ShapeError(f"expected (T, C, H, W), got {frames.shape}")
    if frames.size == 0:
        raise ShapeError("empty input")
    padded, orig_h, orig_w = pad_to_multiple(frames, block_size)
    t, c, hp, wp = padded.shape
    b = block_size
    gh, gw = hp // b, wp // b
    m = Tensor(basis_matrix(b))
    mt = m.transpose()

    patches = (padded.reshape(t, c, gh, b, gw, b)
               .permute(0, 1, 2, 4, 3, 5)
               .reshape(t * c * gh * gw * b, b))
    right = (patches @ mt).reshape(t * c * gh * gw, b, b)        # P @ M.T
    full = ((right.permute(0, 2, 1).reshape(-1, b) @ mt)          # M @ (P M.T)
            .reshape(t * c * gh * gw, b, b).permute(0, 2, 1))
    spectral = (full.reshape(t, c, gh, gw, b, b)
                .permute(0, 4, 5, 1, 2, 3)
                .reshape(t, b * b, c, gh, gw))
    return SpectralMap(spectral, b, hp, wp, orig_h, orig_w)


def from_spectral(spec: SpectralMap) -> Tensor:
    """Inverse of to_spectral, with the reflect padding removed."""
    t, f, c, gh, gw = spec.data.shape
    b = spec.block_size
    if f != b * b:
        raise ShapeError(f"frequency count {f} != block_size^2 {b * b}")
    m = Tensor(basis_matrix(b))

    blocks = (spec.data.reshape(t, b, b, c, gh, gw)
              .permute(0, 3, 4, 5, 1, 2)
              .reshape(t * c * gh * gw * b, b))
    right = (blocks @ m).reshape(t * c * gh * gw, b, b)           # D @ M
    full = ((right.permute(0, 2, 1).reshape(-1, b) @ m)            # M.T @ (D M) via transpose trick
            .reshape(t * c * gh * gw, b, b).permute(0, 2, 1))
    frames = (full.reshape(t, c, gh, gw, b, b)
              .permute(0, 1, 2, 4, 3, 5)
              .reshape(t, c, gh * b, gw * b))
    return frames[:, :, :spec.orig_height, :spec.orig_width]


def spectral_energy(spec: SpectralMap) -> float:
    return float((spec.data.data ** 2).sum())


def save_spectral_map(path_prefix: str, spec: SpectralMap) -> None:
    """FTT tensor plus key=value sidecar with geometry."""
    write_ftt(path_prefix + ".ftt", spec.data.data)
    with open(path_prefix + ".meta", "w") as fh:
        fh.write(f"block_size={spec.block_size}\n")
        fh.write(f"frame_height={spec.frame_height}\n")
        fh.write(f"frame_width={spec.frame_width}\n")
        fh.write(f"orig_height={spec.orig_height}\n")
        fh.write(f"orig_width={spec.orig_width}\n")


def load_spectral_map(path_prefix: str) -> SpectralMap:
    data = read_ftt(path_prefix + ".ftt")
    meta: dict[str, int] = {}
    with open(path_prefix + ".meta") as fh:
        for line in fh:
            if "=" in line:
                key, _, value = line.strip().partition("=")
                meta[key] = int(value)
    return SpectralMap(Tensor(data), meta["block_size"], meta["frame_height"],
                       meta["frame_width"], meta["orig_height"], meta["orig_width"])
