"""Recurrent frequency-domain restoration network.

Per frame: queries come from the bicubic-upsampled input, keys/values from
the learned upsampler's output and the flow-warped hidden state, both taken
through the block DCT and tokenized. A space stage and a cross-source time
stage (wired by the configured scheme) produce the attention output, which
is fused with the spectral features through a zero-initialized linear map
and added back residually, so at initialization the network is exactly the
learned upsampler (itself initialized to bicubic). The inverse DCT of the
fused spectrum is the restored frame; the hidden state is refreshed from
the attention output and the spectral features.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ftvsr.attention import (AttentionConfig, FeedForward, init_attention,
                             init_dfa, init_ffn)
from ftvsr.dct import from_spectral, to_spectral
from ftvsr.ftt import load_tensor_dir, save_tensor_dir
from ftvsr.tensor import ShapeError, Tensor, concat
from ftvsr.tokens import TokenGrid, detokenize, tokenize
from ftvsr.video_attention import SCHEME_KINDS, inner_attend

CHARBONNIER_EPS = 1e-3


# ---------------------------------------------------------------------------
# resampling and convolution primitives
# ---------------------------------------------------------------------------

def _catmull_rom(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom cubic kernel (a = -0.5); sums to 1 over integer offsets."""
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = 1.5 * t[near] ** 3 - 2.5 * t[near] ** 2 + 1.0
    out[far] = -0.5 * t[far] ** 3 + 2.5 * t[far] ** 2 - 4.0 * t[far] + 2.0
    return out


@lru_cache(maxsize=None)
def upsample_matrix(n_in: int, scale: int) -> np.ndarray:
    """(n_in*scale, n_in) bicubic interpolation matrix, edge-clamped.

    Output sample i reads source coordinate (i + 0.5)/scale - 0.5.
    """
    if scale < 1:
        raise ShapeError("scale must be a positive integer")
    n_out = n_in * scale
    mat = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) / scale - 0.5
        base = math.floor(src)
        for tap in range(-1, 3):
            weight = _catmull_rom(np.array([src - (base + tap)]))[0]
            idx = min(max(base + tap, 0), n_in - 1)
            mat[i, idx] += weight
    mat.flags.writeable = False
    return mat


def bicubic(img: Tensor, scale: int) -> Tensor:
    """Bicubic upsampling of (C, H, W) by an integer factor; scale 1 is identity."""
    if img.ndim != 3:
        raise ShapeError(f"bicubic expects (C, H, W), got {img.shape}")
    if scale == 1:
        return img
    c, h, w = img.shape
    mh = Tensor(upsample_matrix(h, scale))
    mw = Tensor(upsample_matrix(w, scale))
    # columns first: (C*H, W) @ Mw^T, then rows
    x = (img.reshape(c * h, w) @ mw.transpose()).reshape(c, h, w * scale)
    x = x.permute(0, 2, 1).reshape(c * w * scale, h) @ mh.transpose()
    return x.reshape(c, w * scale, h * scale).permute(0, 2, 1)


@lru_cache(maxsize=None)
def _conv_gather_index(c_in: int, h: int, w: int, kh: int, kw: int) -> np.ndarray:
    """Flat indices building the (C*kh*kw, H*W) im2col matrix with reflect padding."""
    ph, pw = kh // 2, kw // 2
    rows = np.pad(np.arange(h), ph, mode="reflect")
    cols = np.pad(np.arange(w), pw, mode="reflect")
    y = np.arange(h)[:, None] + np.arange(kh)[None, :]      # (H, kh) padded row coords
    x = np.arange(w)[:, None] + np.arange(kw)[None, :]
    src_y = rows[y]                                          # (H, kh) original rows
    src_x = cols[x]
    # index[(c, ky, kx), (yy, xx)] = c*H*W + src_y[yy, ky]*W + src_x[xx, kx]
    chan = (np.arange(c_in) * h * w)[:, None, None, None, None]
    grid = src_y[None, :, None, :, None] * w + src_x[None, None, :, None, :]
    idx = (chan + grid)                                      # (C, H, W, kh, kw)
    idx = idx.transpose(0, 3, 4, 1, 2).reshape(c_in * kh * kw, h * w)
    idx.flags.writeable = False
    return idx


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-size 2D convolution with reflect padding.

    x: (C_in, H, W); weight: (C_out, C_in, kh, kw); bias: (C_out,).
    """
    c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv2d channel mismatch: input {c_in}, weight {c_in_w}")
    cols = x.take(_conv_gather_index(c_in, h, w, kh, kw))    # (C_in*kh*kw, H*W)
    out = weight.reshape(c_out, c_in * kh * kw) @ cols       # (C_out, H*W)
    out = out + bias.reshape(c_out, 1)
    return out.reshape(c_out, h, w)


def warp(features: Tensor, flow: np.ndarray) -> Tensor:
    """Bilinear backward warp: output(y, x) samples (y - dy, x - dx), border-clamped.

    Differentiable in the features; the flow is a constant input.
    """
    c, h, w = features.shape
    if flow.shape != (2, h, w):
        raise ShapeError(f"flow shape {flow.shape} does not match features {features.shape}")
    if not np.all(np.isfinite(flow)):
        raise ShapeError("flow contains non-finite values")
    xs = np.arange(w)[None, :] - flow[0]
    ys = np.arange(h)[:, None] - flow[1]
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    wx = xs - x0
    wy = ys - y0

    def gather(yi: np.ndarray, xi: np.ndarray) -> Tensor:
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        base = (yc * w + xc)[None, :, :] + (np.arange(c) * h * w)[:, None, None]
        return features.take(base)

    out = (gather(y0, x0) * Tensor(((1 - wy) * (1 - wx))[None])
           + gather(y0, x0 + 1) * Tensor(((1 - wy) * wx)[None])
           + gather(y0 + 1, x0) * Tensor((wy * (1 - wx))[None])
           + gather(y0 + 1, x0 + 1) * Tensor((wy * wx)[None]))
    return out


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class HiddenState:
    """Recurrent pixel-aligned feature map carried between frames."""
    features: Tensor      # (C_h, aH, aW)
    frame_index: int = -1


@dataclass
class FlowField:
    """Per-pixel displacements (dx, dy); zero flow is the identity warp."""
    flow: np.ndarray      # (2, aH, aW)

    @staticmethod
    def zero(height: int, width: int) -> "FlowField":
        return FlowField(np.zeros((2, height, width)))


@dataclass
class StageParams:
    attn: AttentionConfig
    ffn: FeedForward

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        out = self.attn.named_parameters(prefix + "attn.")
        out.update(self.ffn.named_parameters(prefix + "ffn."))
        return out


@dataclass
class ModelParams:
    """All learnable tensors plus the geometry they were built for."""
    scale: int
    block_size: int
    token_edge: int
    channels: int
    hidden_channels: int
    scheme: str
    attention_variant: str
    head_count: int
    phi_width: int
    lr_height: int
    lr_width: int
    phi_w1: Tensor = field(repr=False, default=None)
    phi_b1: Tensor = field(repr=False, default=None)
    phi_w2: Tensor = field(repr=False, default=None)
    phi_b2: Tensor = field(repr=False, default=None)
    state_in: Tensor = field(repr=False, default=None)    # (C_h, C) pixel projection
    fuse: Tensor = field(repr=False, default=None)        # (2d, d), zero-init
    state_out: Tensor = field(repr=False, default=None)   # (2d, C_h*K*K)
    stage_space: StageParams | None = None
    stage_time: StageParams | None = None
    stage_joint: StageParams | None = None

    @property
    def token_dim(self) -> int:
        return self.channels * self.token_edge ** 2

    def stages(self) -> dict[str, StageParams]:
        out = {}
        if self.stage_space is not None:
            out["space"] = self.stage_space
        if self.stage_time is not None:
            out["time"] = self.stage_time
        if self.stage_joint is not None:
            out["joint"] = self.stage_joint
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        named = {
            "phi.w1": self.phi_w1, "phi.b1": self.phi_b1,
            "phi.w2": self.phi_w2, "phi.b2": self.phi_b2,
            "state_in": self.state_in, "fuse": self.fuse, "state_out": self.state_out,
        }
        for name, stage in self.stages().items():
            named.update(stage.named_parameters(f"{name}."))
        return named

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


def _grid_blocks(params: ModelParams) -> int:
    """Spatial block count N of one upsampled frame's token grid."""
    b, k = params.block_size, params.token_edge
    hp = math.ceil(params.lr_height * params.scale / b) * b
    wp = math.ceil(params.lr_width * params.scale / b) * b
    gh, gw = hp // b, wp // b
    if gh % k or gw % k:
        raise ShapeError(
            f"token edge {k} does not divide the {gh}x{gw} spectral grid; "
            f"choose block_size/token_edge to fit {hp}x{wp} frames")
    return (gh // k) * (gw // k)


def _init_stage(params: ModelParams, kv_blocks: int,
                rng: np.random.Generator) -> StageParams:
    d = params.token_dim
    if params.attention_variant == "dfa":
        attn = init_dfa(d, params.head_count, kv_blocks, rng)
    else:
        attn = init_attention(d, params.head_count, rng)
    return StageParams(attn=attn, ffn=init_ffn(d, rng))


def init_model(scale: int, block_size: int, token_edge: int, channels: int,
               lr_height: int, lr_width: int, scheme: str = "st",
               attention_variant: str = "fa", head_count: int = 1,
               hidden_channels: int = 8, phi_width: int = 16,
               seed: int = 0) -> ModelParams:
    """Build freshly initialized parameters for the given geometry.

    The fusion map is zero-initialized so the network starts as a pure
    residual identity around the learned upsampler; the upsampler's last
    convolution is zero-initialized so it starts as bicubic.
    """
    if scheme not in SCHEME_KINDS:
        raise ShapeError(f"unknown scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    params = ModelParams(
        scale=scale, block_size=block_size, token_edge=token_edge,
        channels=channels, hidden_channels=hidden_channels, scheme=scheme,
        attention_variant=attention_variant, head_count=head_count,
        phi_width=phi_width, lr_height=lr_height, lr_width=lr_width)

    wf, c = phi_width, channels
    k1 = 1.0 / math.sqrt(c * 9)
    params.phi_w1 = Tensor(rng.uniform(-k1, k1, size=(wf, c, 3, 3)), requires_grad=True)
    params.phi_b1 = Tensor(rng.uniform(-k1, k1, size=(wf,)), requires_grad=True)
    params.phi_w2 = Tensor(np.zeros((c, wf, 3, 3)), requires_grad=True)
    params.phi_b2 = Tensor(np.zeros((c,)), requires_grad=True)

    ch = hidden_channels
    params.state_in = Tensor(rng.uniform(-1 / math.sqrt(ch), 1 / math.sqrt(ch),
                                         size=(ch, c)), requires_grad=True)
    d = params.token_dim
    params.fuse = Tensor(np.zeros((2 * d, d)), requires_grad=True)
    b_u = 1.0 / math.sqrt(2 * d)
    params.state_out = Tensor(rng.uniform(-b_u, b_u, size=(2 * d, ch * token_edge ** 2)),
                              requires_grad=True)

    n_frame = _grid_blocks(params)
    if scheme in ("sf", "st", "ts"):
        params.stage_space = _init_stage(params, n_frame, rng)
    if scheme in ("tf", "st", "ts"):
        # time-stage key/value sets live at one block: N = 1 pseudo-grids
        params.stage_time = _init_stage(params, 1, rng)
    if scheme == "joint":
        params.stage_joint = _init_stage(params, n_frame, rng)
    return params


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def upsample_phi(lr: Tensor, scale: int, params: ModelParams) -> Tensor:
    """Learned upsampler: bicubic plus a two-conv residual (zero at init)."""
    if lr.ndim == 4:
        t, c, h, w = lr.shape
        frames = [upsample_phi(lr[i], scale, params).reshape(1, c, h * scale, w * scale)
                  for i in range(t)]
        return frames[0] if len(frames) == 1 else concat(frames, axis=0)
    base = bicubic(lr, scale)
    hidden = conv2d(base, params.phi_w1, params.phi_b1).tanh()
    return base + conv2d(hidden, params.phi_w2, params.phi_b2)


def _frame_grid(frame: Tensor, params: ModelParams) -> TokenGrid:
    """(C, H, W) frame -> token grid through the block DCT."""
    c, h, w = frame.shape
    return tokenize(to_spectral(frame.reshape(1, c, h, w), params.block_size),
                    params.token_edge)


def _state_tokens(state: HiddenState, flow: FlowField | None,
                  params: ModelParams) -> TokenGrid:
    """Warp the hidden state, project to image channels, tokenize."""
    feats = state.features
    if flow is not None:
        feats = warp(feats, flow.flow)
    ch, h, w = feats.shape
    pixels = (feats.reshape(ch, h * w).transpose() @ params.state_in)  # (H*W, C)
    image = pixels.transpose().reshape(params.channels, h, w)
    return _frame_grid(image, params)


def _time_attend(q: Tensor, phi_tokens: Tensor, hid_tokens: Tensor,
                 stage: StageParams) -> Tensor:
    """Per-block attention against the [phi, hidden] pseudo-frames."""
    n, f, d = phi_tokens.shape
    blocks = []
    for bi in range(n):
        kv = concat([phi_tokens[bi].reshape(1, 1, f, d),
                     hid_tokens[bi].reshape(1, 1, f, d)], axis=0)
        blocks.append(inner_attend(q[bi * f:(bi + 1) * f], kv, stage.attn))
    out = blocks[0] if len(blocks) == 1 else concat(blocks, axis=0)
    return stage.ffn.apply(out)


def _space_attend(q: Tensor, phi_tokens: Tensor, stage: StageParams) -> Tensor:
    n, f, d = phi_tokens.shape
    out = inner_attend(q, phi_tokens.reshape(1, n, f, d), stage.attn)
    return stage.ffn.apply(out)


def _joint_attend(q: Tensor, phi_tokens: Tensor, hid_tokens: Tensor,
                  stage: StageParams) -> Tensor:
    n, f, d = phi_tokens.shape
    kv = concat([phi_tokens.reshape(1, n, f, d), hid_tokens.reshape(1, n, f, d)], axis=0)
    out = inner_attend(q, kv, stage.attn)
    return stage.ffn.apply(out)


def init_hidden(params: ModelParams, height: int, width: int) -> HiddenState:
    """Zero state at the spectral (padded) resolution of upsampled frames."""
    b = params.block_size
    hp = math.ceil(height / b) * b
    wp = math.ceil(width / b) * b
    return HiddenState(Tensor.zeros((params.hidden_channels, hp, wp)))


def _require_stage(stage: StageParams | None, name: str) -> StageParams:
    if stage is None:
        raise ShapeError(f"model was built without the {name} stage; "
                         "re-init with the matching scheme")
    return stage


def forward_frame(lr_seq: Tensor, t: int, state: HiddenState, params: ModelParams,
                  flow: FlowField | None = None,
                  scheme: str | None = None) -> tuple[Tensor, HiddenState]:
    """Restore frame t of an (T, C, H, W) low-resolution sequence.

    Returns the (C, aH, aW) frame and the refreshed hidden state.
    """
    scheme = scheme or params.scheme
    if not 0 <= t < lr_seq.shape[0]:
        raise ShapeError(f"frame {t} outside sequence of length {lr_seq.shape[0]}")
    lr_frame = lr_seq[t]

    phi_frame = upsample_phi(lr_frame, params.scale, params)
    query_grid = _frame_grid(bicubic(lr_frame, params.scale), params)
    spec_grid = _frame_grid(phi_frame, params)
    hid_grid = _state_tokens(state, flow, params)

    n, f, d = spec_grid.block_count, spec_grid.freq_count, spec_grid.token_dim
    q = query_grid.tokens.reshape(n * f, d)
    phi_tokens = spec_grid.tokens.reshape(n, f, d)
    hid_tokens = hid_grid.tokens.reshape(n, f, d)

    if scheme == "st":
        space_out = _space_attend(q, phi_tokens, _require_stage(params.stage_space, "space"))
        time_out = _time_attend(space_out, phi_tokens, hid_tokens,
                                _require_stage(params.stage_time, "time"))
        attended, state_src = space_out + time_out, time_out
    elif scheme == "ts":
        time_out = _time_attend(q, phi_tokens, hid_tokens,
                                _require_stage(params.stage_time, "time"))
        space_out = _space_attend(time_out, phi_tokens,
                                  _require_stage(params.stage_space, "space"))
        attended, state_src = space_out + time_out, space_out
    elif scheme == "sf":
        space_out = _space_attend(q, phi_tokens, _require_stage(params.stage_space, "space"))
        attended = state_src = space_out
    elif scheme == "tf":
        time_out = _time_attend(q, phi_tokens, hid_tokens,
                                _require_stage(params.stage_time, "time"))
        attended = state_src = time_out
    elif scheme == "joint":
        joint_out = _joint_attend(q, phi_tokens, hid_tokens,
                                  _require_stage(params.stage_joint, "joint"))
        attended = state_src = joint_out
    else:
        raise ShapeError(f"unknown scheme {scheme!r}")

    spec_flat = spec_grid.tokens.reshape(n * f, d)
    fused = concat([attended, spec_flat], axis=1) @ params.fuse + spec_flat
    out_grid = spec_grid.replace_tokens(fused.reshape(1, n, f, d))
    sr_frame = from_spectral(detokenize(out_grid))[0]

    update = concat([state_src, spec_flat], axis=1) @ params.state_out
    ch, k = params.hidden_channels, params.token_edge
    state_grid = TokenGrid(update.reshape(1, n, f, ch * k * k), k, ch,
                           spec_grid.block_size, spec_grid.grid_h, spec_grid.grid_w,
                           spec_grid.frame_height, spec_grid.frame_width,
                           spec_grid.frame_height, spec_grid.frame_width)
    new_features = from_spectral(detokenize(state_grid))[0]
    return sr_frame, HiddenState(new_features, frame_index=t)


def forward_sequence(lr_seq: Tensor, params: ModelParams,
                     flows: list[FlowField] | None = None,
                     scheme: str | None = None) -> list[Tensor]:
    """Left-to-right recurrence over forward_frame; zero state at the start."""
    if lr_seq.ndim != 4 or lr_seq.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (T, C, H, W) sequence, got {lr_seq.shape}")
    t_len, _, h, w = lr_seq.shape
    state = init_hidden(params, h * params.scale, w * params.scale)
    outputs = []
    for t in range(t_len):
        flow = flows[t] if flows is not None else None
        sr, state = forward_frame(lr_seq, t, state, params, flow=flow, scheme=scheme)
        outputs.append(sr)
    return outputs


def charbonnier_loss(sr_seq: list[Tensor], hr_seq, eps: float = CHARBONNIER_EPS) -> Tensor:
    """Mean over frames of sqrt(||hr - sr||^2 + eps^2)."""
    if isinstance(hr_seq, Tensor):
        hr_frames = [hr_seq[i] for i in range(hr_seq.shape[0])]
    else:
        hr_frames = list(hr_seq)
    if len(hr_frames) != len(sr_seq):
        raise ShapeError(f"sequence lengths differ: {len(sr_seq)} vs {len(hr_frames)}")
    total = None
    for sr, hr in zip(sr_seq, hr_frames):
        if not isinstance(hr, Tensor):
            hr = Tensor(hr)
        if sr.shape != hr.shape:
            raise ShapeError(f"frame shapes differ: {sr.shape} vs {hr.shape}")
        diff = hr - sr
        term = ((diff * diff).sum() + eps * eps).sqrt()
        total = term if total is None else total + term
    return total / len(sr_seq)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_META_FIELDS = ("scale", "block_size", "token_edge", "channels", "hidden_channels",
                "head_count", "phi_width", "lr_height", "lr_width")


def save_model(directory: str, params: ModelParams,
               extra_meta: dict[str, str] | None = None,
               extra_tensors: dict[str, np.ndarray] | None = None) -> None:
    meta = {name: str(getattr(params, name)) for name in _META_FIELDS}
    meta["scheme"] = params.scheme
    meta["attention_variant"] = params.attention_variant
    meta.update(extra_meta or {})
    tensors = {name: t.data for name, t in params.named_parameters().items()}
    for name, arr in (extra_tensors or {}).items():
        tensors[f"extra.{name}"] = arr
    save_tensor_dir(directory, tensors, meta)


def load_model(directory: str) -> tuple[ModelParams, dict[str, str], dict[str, np.ndarray]]:
    tensors, meta = load_tensor_dir(directory)
    params = init_model(
        scale=int(meta["scale"]), block_size=int(meta["block_size"]),
        token_edge=int(meta["token_edge"]), channels=int(meta["channels"]),
        lr_height=int(meta["lr_height"]), lr_width=int(meta["lr_width"]),
        scheme=meta["scheme"], attention_variant=meta["attention_variant"],
        head_count=int(meta["head_count"]), hidden_channels=int(meta["hidden_channels"]),
        phi_width=int(meta["phi_width"]))
    extra = {}
    named = params.named_parameters()
    for name, arr in tensors.items():
        if name.startswith("extra."):
            extra[name[len("extra."):]] = arr
            continue
        if name not in named:
            raise ShapeError(f"checkpoint tensor {name!r} not in model")
        if named[name].shape != arr.shape:
            raise ShapeError(f"checkpoint tensor {name!r} shape {arr.shape} != {named[name].shape}")
        named[name].data = np.ascontiguousarray(arr)
    return params, meta, extra
