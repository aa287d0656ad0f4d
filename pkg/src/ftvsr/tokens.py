"""Frequency tokens: fine-grained slices of a spectral map.

Token (t, i, f) is the C x K x K patch of frequency plane f over spatial
block i of frame t, flattened row-major, so a grid is a (T, N, F, C*K*K)
tensor with N = (H/(B*K)) * (W/(B*K)) blocks in row-major order.
tokenize/detokenize are pure reshapes and round-trip bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

from ftvsr.dct import SpectralMap
from ftvsr.tensor import ShapeError, Tensor, concat


@dataclass
class TokenGrid:
    """Tokenized spectral map plus the geometry needed to invert it."""
    tokens: Tensor        # (T, N, F, C*K*K)
    token_edge: int       # K, in spectral-map cells
    channels: int
    block_size: int       # B of the source map
    grid_h: int           # spatial blocks down
    grid_w: int           # spatial blocks across
    frame_height: int     # padded pixel extents of the source frames
    frame_width: int
    orig_height: int
    orig_width: int

    @property
    def frames(self) -> int:
        return self.tokens.shape[0]

    @property
    def block_count(self) -> int:
        return self.tokens.shape[1]

    @property
    def freq_count(self) -> int:
        return self.tokens.shape[2]

    @property
    def token_dim(self) -> int:
        return self.tokens.shape[3]

    def replace_tokens(self, tokens: Tensor) -> "TokenGrid":
        if tokens.shape != self.tokens.shape:
            raise ShapeError(f"replacement tokens {tokens.shape} != {self.tokens.shape}")
        return TokenGrid(tokens, self.token_edge, self.channels, self.block_size,
                         self.grid_h, self.grid_w, self.frame_height, self.frame_width,
                         self.orig_height, self.orig_width)


@dataclass
class QKVSets:
    """Query/key/value token matrices built from one grid.

    Queries come from the target frame; keys and values from every other
    frame, ordered lexicographically by (frame, block, frequency). With a
    single frame the key/value matrices are empty (0 x dim) and the caller
    substitutes another source, e.g. the recurrent hidden state.
    """
    queries: Tensor       # (N*F, dim)
    keys: Tensor          # ((T-1)*N*F, dim)
    values: Tensor


def tokenize(spec: SpectralMap, token_edge: int) -> TokenGrid:
    """Split a spectral map into (T, N, F, C*K*K) tokens."""
    t, f, c, gh, gw = spec.data.shape
    k = token_edge
    if k < 1:
        raise ShapeError("token edge must be positive")
    if gh % k or gw % k:
        raise ShapeError(f"token edge {k} does not divide spectral extents {gh}x{gw}")
    bh, bw = gh // k, gw // k
    tokens = (spec.data.reshape(t, f, c, bh, k, bw, k)
              .permute(0, 3, 5, 1, 2, 4, 6)
              .reshape(t, bh * bw, f, c * k * k))
    return TokenGrid(tokens, k, c, spec.block_size, bh, bw,
                     spec.frame_height, spec.frame_width,
                     spec.orig_height, spec.orig_width)


def detokenize(grid: TokenGrid) -> SpectralMap:
    """Exact inverse of tokenize."""
    t, n, f, d = grid.tokens.shape
    k, c = grid.token_edge, grid.channels
    bh, bw = grid.grid_h, grid.grid_w
    if n != bh * bw or d != c * k * k:
        raise ShapeError(f"grid geometry mismatch: {grid.tokens.shape} vs "
                         f"N={bh * bw}, dim={c * k * k}")
    data = (grid.tokens.reshape(t, bh, bw, f, c, k, k)
            .permute(0, 3, 4, 1, 5, 2, 6)
            .reshape(t, f, c, bh * k, bw * k))
    return SpectralMap(data, grid.block_size, grid.frame_height, grid.frame_width,
                       grid.orig_height, grid.orig_width)


def flatten_tokens(grid: TokenGrid) -> Tensor:
    """All tokens as a ((T*N*F), dim) matrix in (t, i, f) lexicographic order."""
    t, n, f, d = grid.tokens.shape
    return grid.tokens.reshape(t * n * f, d)


def frame_tokens(grid: TokenGrid, frame: int) -> Tensor:
    """One frame's tokens as an (N*F, dim) matrix."""
    t, n, f, d = grid.tokens.shape
    return grid.tokens[frame].reshape(n * f, d)


def build_qkv(grid: TokenGrid, target: int | None = None) -> QKVSets:
    """Queries from the target frame (default: last), keys/values from the rest."""
    t, n, f, d = grid.tokens.shape
    if t < 1:
        raise ShapeError("grid has no frames")
    if target is None:
        target = t - 1
    if not 0 <= target < t:
        raise ShapeError(f"target frame {target} outside [0, {t})")
    queries = frame_tokens(grid, target)
    others = [grid.tokens[i].reshape(n * f, d) for i in range(t) if i != target]
    if others:
        keys = concat(others, axis=0)
    else:
        keys = Tensor.zeros((0, d))
    return QKVSets(queries=queries, keys=keys, values=keys)
