"""Frequency attention lifted to video token grids.

Five schemes over a (T, N, F, d) grid:

  sf     per frame, one softmax over its N*F tokens
  tf     per spatial block, one softmax over the T*F tokens at that block
  joint  one softmax over all T*N*F tokens
  st     space stage first, then a time stage whose queries are the space
         output and whose keys/values are the un-attended grid
  ts     the same two stages in the opposite order

Inside the divided schemes the time stage is cross-frame: a frame's tokens
attend only to *other* frames at the same block, and with a single frame
the stage passes its queries through unchanged. That makes the T=1 and
N=1 degeneracies collapse exactly (st == ts == sf at T=1; all five agree
at T=1, N=1 under shared parameters). The standalone tf scheme, by
contrast, self-attends over all T frames.

Each stage's core is plain multi-head frequency attention, or the dual
variant when its config says so.
"""
from __future__ import annotations

from dataclasses import dataclass

from ftvsr.attention import AttentionConfig, dual_transform, multi_head
from ftvsr.tensor import ShapeError, Tensor, concat
from ftvsr.tokens import TokenGrid

SCHEME_KINDS = ("sf", "tf", "joint", "ts", "st")


@dataclass
class TSFScheme:
    """Scheme kind plus the attention block(s) it runs.

    Divided kinds use `inner` for the space stage and `time_inner` for the
    time stage (separate parameters); single-stage kinds use `inner` only.
    """
    kind: str
    inner: AttentionConfig
    time_inner: AttentionConfig | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ShapeError(f"unknown scheme kind {self.kind!r}; expected one of {SCHEME_KINDS}")
        if self.kind in ("ts", "st") and self.time_inner is None:
            raise ShapeError(f"divided scheme {self.kind!r} needs a time-stage config")


def inner_attend(q: Tensor, kv_tokens: Tensor, cfg: AttentionConfig) -> Tensor:
    """Attend query rows against a structured (Tk, Nk, F, d) key/value set."""
    if cfg.variant == "dfa":
        enhanced = dual_transform(kv_tokens, cfg).reshape(-1, kv_tokens.shape[3])
        return multi_head(q, enhanced, enhanced, cfg)
    flat = kv_tokens.reshape(-1, kv_tokens.shape[3])
    return multi_head(q, flat, flat, cfg)


def _space_stage(q_tokens: Tensor, kv_tokens: Tensor, cfg: AttentionConfig) -> Tensor:
    """Per frame: that frame's queries against that frame's N*F tokens."""
    t, n, f, d = q_tokens.shape
    outs = []
    for ti in range(t):
        q = q_tokens[ti].reshape(n * f, d)
        kv = kv_tokens[ti].reshape(1, n, f, d)
        outs.append(inner_attend(q, kv, cfg).reshape(1, n, f, d))
    return outs[0] if len(outs) == 1 else concat(outs, axis=0)


def _time_stage_cross(q_tokens: Tensor, kv_tokens: Tensor, cfg: AttentionConfig) -> Tensor:
    """Per (frame, block): queries against the other frames' tokens there.

    With one frame there are no cross-frame keys, so the stage is a
    pass-through (the trivial time attention of the degeneracy lattice).
    """
    t, n, f, d = q_tokens.shape
    if t == 1:
        return q_tokens
    frames = []
    for ti in range(t):
        blocks = []
        for bi in range(n):
            q = q_tokens[ti, bi]
            others = [kv_tokens[tj, bi].reshape(1, 1, f, d) for tj in range(t) if tj != ti]
            kv = others[0] if len(others) == 1 else concat(others, axis=0)
            blocks.append(inner_attend(q, kv, cfg).reshape(1, 1, f, d))
        frames.append(blocks[0] if len(blocks) == 1 else concat(blocks, axis=1))
    return concat(frames, axis=0)


def attend_sf(grid: TokenGrid, cfg: AttentionConfig) -> TokenGrid:
    """Space-frequency attention: per-frame softmax over N*F tokens."""
    if grid.tokens.size == 0:
        raise ShapeError("empty grid")
    return grid.replace_tokens(_space_stage(grid.tokens, grid.tokens, cfg))


def attend_tf(grid: TokenGrid, cfg: AttentionConfig) -> TokenGrid:
    """Time-frequency attention: per-block softmax over T*F tokens."""
    if grid.tokens.size == 0:
        raise ShapeError("empty grid")
    t, n, f, d = grid.tokens.shape
    blocks = []
    for bi in range(n):
        q = grid.tokens[:, bi].reshape(t * f, d)
        kv = grid.tokens[:, bi].reshape(t, 1, f, d)
        blocks.append(inner_attend(q, kv, cfg).reshape(t, 1, f, d))
    out = blocks[0] if len(blocks) == 1 else concat(blocks, axis=1)
    return grid.replace_tokens(out)


def attend_joint(grid: TokenGrid, cfg: AttentionConfig) -> TokenGrid:
    """Joint space-time-frequency attention: one softmax over T*N*F tokens."""
    if grid.tokens.size == 0:
        raise ShapeError("empty grid")
    t, n, f, d = grid.tokens.shape
    out = inner_attend(grid.tokens.reshape(t * n * f, d), grid.tokens, cfg)
    return grid.replace_tokens(out.reshape(t, n, f, d))


def attend_divided(grid: TokenGrid, space_cfg: AttentionConfig,
                   time_cfg: AttentionConfig, order: str) -> TokenGrid:
    """Two-stage schemes; the inner result feeds the outer stage's queries
    while keys/values stay on the un-attended grid."""
    if grid.tokens.size == 0:
        raise ShapeError("empty grid")
    if order == "st":
        inner = _space_stage(grid.tokens, grid.tokens, space_cfg)
        out = _time_stage_cross(inner, grid.tokens, time_cfg)
    elif order == "ts":
        inner = _time_stage_cross(grid.tokens, grid.tokens, time_cfg)
        out = _space_stage(inner, grid.tokens, space_cfg)
    else:
        raise ShapeError(f"divided order must be 'st' or 'ts', got {order!r}")
    return grid.replace_tokens(out)


def apply_scheme(grid: TokenGrid, scheme: TSFScheme) -> TokenGrid:
    if scheme.kind == "sf":
        return attend_sf(grid, scheme.inner)
    if scheme.kind == "tf":
        return attend_tf(grid, scheme.inner)
    if scheme.kind == "joint":
        return attend_joint(grid, scheme.inner)
    return attend_divided(grid, scheme.inner, scheme.time_inner, scheme.kind)
