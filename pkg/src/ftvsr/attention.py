"""Frequency attention: the single-band core, multi-head form, and the
global / local / dual variants over token grids.

Projections follow transformer convention (learnable W_q/W_k/W_v plus an
output projection); passing no parameters gives the identity-projection
mode used by the oracle tests. The dual variant splits key/value features
into halves, transforms the first half at whole-plane granularity (one
token per frequency band) and the second at fine patch granularity, then
re-concatenates along features and attends the original queries against
the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ftvsr.tensor import ShapeError, Tensor, concat
from ftvsr.tokens import TokenGrid, frame_tokens


@dataclass
class AttentionConfig:
    """Projection parameters and head layout for one attention block.

    w_* of None means identity projections. For the dual variant,
    global_branch / local_branch hold the per-branch blocks; None freezes a
    branch to the identity transform.
    """
    model_dim: int
    head_count: int = 1
    variant: str = "fa"  # "fa" | "dfa"
    w_q: Tensor | None = None
    w_k: Tensor | None = None
    w_v: Tensor | None = None
    w_o: Tensor | None = None
    global_branch: "AttentionConfig | None" = None
    local_branch: "AttentionConfig | None" = None

    def __post_init__(self):
        if self.model_dim < 1:
            raise ShapeError("model_dim must be positive")
        if self.model_dim % self.head_count:
            raise ShapeError(
                f"model_dim {self.model_dim} not divisible by head_count {self.head_count}")

    @property
    def key_dim(self) -> int:
        return self.model_dim // self.head_count

    def parameters(self) -> list[Tensor]:
        out = [w for w in (self.w_q, self.w_k, self.w_v, self.w_o) if w is not None]
        for branch in (self.global_branch, self.local_branch):
            if branch is not None:
                out.extend(branch.parameters())
        return out

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        names = {}
        for name, w in (("w_q", self.w_q), ("w_k", self.w_k),
                        ("w_v", self.w_v), ("w_o", self.w_o)):
            if w is not None:
                names[f"{prefix}{name}"] = w
        if self.global_branch is not None:
            names.update(self.global_branch.named_parameters(f"{prefix}global."))
        if self.local_branch is not None:
            names.update(self.local_branch.named_parameters(f"{prefix}local."))
        return names


def init_attention(model_dim: int, head_count: int,
                   rng: np.random.Generator | None = None) -> AttentionConfig:
    """Attention block with uniform [-1/sqrt(d), 1/sqrt(d)] projections.

    rng of None gives the identity-projection oracle mode.
    """
    cfg = AttentionConfig(model_dim=model_dim, head_count=head_count)
    if rng is not None:
        bound = 1.0 / math.sqrt(model_dim)
        for name in ("w_q", "w_k", "w_v", "w_o"):
            setattr(cfg, name,
                    Tensor(rng.uniform(-bound, bound, size=(model_dim, model_dim)),
                           requires_grad=True))
    return cfg


def init_dfa(model_dim: int, head_count: int, block_count: int,
             rng: np.random.Generator | None = None,
             branch_heads: int = 1) -> AttentionConfig:
    """Dual-variant block; branch widths depend on the grid's block count."""
    if model_dim % 2:
        raise ShapeError(f"dual attention needs an even feature width, got {model_dim}")
    cfg = init_attention(model_dim, head_count, rng)
    cfg.variant = "dfa"
    if rng is not None:
        half = model_dim // 2
        cfg.global_branch = init_attention(block_count * half, branch_heads, rng)
        cfg.local_branch = init_attention(half, branch_heads, rng)
    return cfg


def attention_weights(q: Tensor, k: Tensor, key_dim: int) -> Tensor:
    """Row-stochastic softmax(q k^T / sqrt(key_dim)) matrix."""
    scores = (q @ k.transpose()) * (1.0 / math.sqrt(key_dim))
    return scores.softmax(axis=1)


def _project(x: Tensor, w: Tensor | None) -> Tensor:
    return x if w is None else x @ w


def _validate_qkv(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig) -> None:
    if k.shape[0] == 0:
        raise ShapeError("empty key set")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key/value counts differ: {k.shape[0]} vs {v.shape[0]}")
    for name, t in (("queries", q), ("keys", k), ("values", v)):
        if t.shape[1] != cfg.model_dim:
            raise ShapeError(f"{name} width {t.shape[1]} != model_dim {cfg.model_dim}")


def freq_attention(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig) -> Tensor:
    """Single-band attention: project, softmax over keys, value-mix, project out."""
    _validate_qkv(q, k, v, cfg)
    qp, kp, vp = _project(q, cfg.w_q), _project(k, cfg.w_k), _project(v, cfg.w_v)
    mixed = attention_weights(qp, kp, cfg.key_dim) @ vp
    return _project(mixed, cfg.w_o)


def multi_head(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig) -> Tensor:
    """Heads on key_dim-wide slices of the projections, concatenated then projected."""
    _validate_qkv(q, k, v, cfg)
    qp, kp, vp = _project(q, cfg.w_q), _project(k, cfg.w_k), _project(v, cfg.w_v)
    dk = cfg.key_dim
    heads = []
    for h in range(cfg.head_count):
        sl = slice(h * dk, (h + 1) * dk)
        qh, kh, vh = qp[:, sl], kp[:, sl], vp[:, sl]
        heads.append(attention_weights(qh, kh, dk) @ vh)
    return _project(heads[0] if len(heads) == 1 else concat(heads, axis=1), cfg.w_o)


def _per_frame(grid: TokenGrid, transform) -> TokenGrid:
    t, n, f, d = grid.tokens.shape
    outs = [transform(frame_tokens(grid, i)).reshape(1, n, f, d) for i in range(t)]
    stacked = outs[0] if len(outs) == 1 else concat(outs, axis=0)
    return grid.replace_tokens(stacked)


def gfa(grid: TokenGrid, cfg: AttentionConfig) -> TokenGrid:
    """Global frequency attention among whole-plane tokens (needs N == 1)."""
    if grid.block_count != 1:
        raise ShapeError(
            f"global frequency attention expects whole-plane tokens (N=1), got N={grid.block_count}")
    return _per_frame(grid, lambda x: multi_head(x, x, x, cfg))


def lfa(grid: TokenGrid, cfg: AttentionConfig) -> TokenGrid:
    """Local frequency attention over each frame's N*F fine tokens.

    The attention matrix is FN x FN per frame.
    """
    return _per_frame(grid, lambda x: multi_head(x, x, x, cfg))


def _plane_view(tokens: Tensor) -> Tensor:
    """(T, N, F, h) -> (T, F, N*h): one token per frequency band per frame."""
    t, n, f, h = tokens.shape
    return tokens.permute(0, 2, 1, 3).reshape(t, f, n * h)


def _unplane_view(planes: Tensor, block_count: int) -> Tensor:
    t, f, nh = planes.shape
    h = nh // block_count
    return planes.reshape(t, f, block_count, h).permute(0, 2, 1, 3)


def dual_transform(tokens: Tensor, cfg: AttentionConfig) -> Tensor:
    """The key/value enhancement inside dual attention.

    tokens is a (T, N, F, d) set. Features split into halves; the first
    half is self-attended at whole-plane granularity, the second at fine
    granularity; the halves are concatenated back so widths stay compatible
    with the queries.
    """
    t, n, f, d = tokens.shape
    if d % 2:
        raise ShapeError(f"dual attention needs an even feature width, got {d}")
    half = d // 2
    first = tokens[:, :, :, :half]
    second = tokens[:, :, :, half:]

    if cfg.global_branch is not None:
        if cfg.global_branch.model_dim != n * half:
            raise ShapeError(
                f"global branch width {cfg.global_branch.model_dim} != N*d/2 = {n * half}")
        planes = _plane_view(first)
        outs = [multi_head(planes[i], planes[i], planes[i], cfg.global_branch)
                .reshape(1, f, n * half) for i in range(t)]
        planes = outs[0] if len(outs) == 1 else concat(outs, axis=0)
        first = _unplane_view(planes, n)

    if cfg.local_branch is not None:
        if cfg.local_branch.model_dim != half:
            raise ShapeError(
                f"local branch width {cfg.local_branch.model_dim} != d/2 = {half}")
        outs = []
        for i in range(t):
            x = second[i].reshape(n * f, half)
            outs.append(multi_head(x, x, x, cfg.local_branch).reshape(1, n, f, half))
        second = outs[0] if len(outs) == 1 else concat(outs, axis=0)

    return concat([first.reshape(t, n, f, half), second.reshape(t, n, f, half)], axis=3)


def dfa(q_grid: TokenGrid, k_grid: TokenGrid, v_grid: TokenGrid,
        cfg: AttentionConfig) -> TokenGrid:
    """Dual frequency attention over geometry-compatible grids."""
    for other in (k_grid, v_grid):
        if (other.block_count, other.freq_count, other.token_dim) != \
           (q_grid.block_count, q_grid.freq_count, q_grid.token_dim):
            raise ShapeError("dual attention grids are not geometry-compatible")
    tq, n, f, d = q_grid.tokens.shape
    k_tokens = dual_transform(k_grid.tokens, cfg).reshape(-1, d)
    v_tokens = dual_transform(v_grid.tokens, cfg).reshape(-1, d)
    out = multi_head(q_grid.tokens.reshape(tq * n * f, d), k_tokens, v_tokens, cfg)
    return q_grid.replace_tokens(out.reshape(tq, n, f, d))


@dataclass
class FeedForward:
    """Post-attention MLP: x + tanh(x W1) W2, width factor 2."""
    w1: Tensor
    w2: Tensor

    def apply(self, x: Tensor) -> Tensor:
        return x + (x @ self.w1).tanh() @ self.w2

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.w2]

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        return {f"{prefix}w1": self.w1, f"{prefix}w2": self.w2}


def init_ffn(model_dim: int, rng: np.random.Generator, factor: int = 2) -> FeedForward:
    hidden = factor * model_dim
    b1 = 1.0 / math.sqrt(model_dim)
    b2 = 1.0 / math.sqrt(hidden)
    return FeedForward(
        w1=Tensor(rng.uniform(-b1, b1, size=(model_dim, hidden)), requires_grad=True),
        w2=Tensor(rng.uniform(-b2, b2, size=(hidden, model_dim)), requires_grad=True))
