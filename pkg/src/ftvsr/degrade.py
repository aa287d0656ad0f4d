"""Synthetic low-quality video generation: blur, downsample, noise, and a
block-DCT quantization proxy for codec compression.

The pipeline is blur -> downsample -> additive Gaussian noise -> compress.
Two downsampling flavors: plain bicubic (antialiased) when no blur kernel
is configured, and stride sampling after a Gaussian kernel otherwise. The
compression proxy quantizes each block's DCT coefficients with a step that
grows linearly in the radial frequency, scaled by a single quality knob q
(q = 0 is the identity). No claim is made that q maps onto any codec's
rate parameter; the proxy only reproduces the artifact class of
block-local quantization error.

Everything here is plain numpy on (T, C, H, W) or (C, H, W) float arrays:
the degradation side never needs gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ftvsr.dct import dct2_batch, idct2_batch

DEFAULT_PROXY_BLOCK = 8
BD_KERNEL_SIGMA = 1.6
BD_KERNEL_SIZE = 13


class DegradationError(ValueError):
    pass


@dataclass
class DegradationSpec:
    """Declarative description of the degradation pipeline.

    kernel_sigma <= 0 means no blur (bicubic downsampling); otherwise the
    Gaussian kernel is applied and downsampling is stride sampling.
    """
    scale: int = 1
    kernel_sigma: float = 0.0
    kernel_size: int = 0
    noise_sigma: float = 0.0      # in [0, 1] pixel units, e.g. 15/255
    quant_q: float = 0.0          # compression proxy quality step scale
    proxy_block: int = DEFAULT_PROXY_BLOCK

    def __post_init__(self):
        if self.scale < 1:
            raise DegradationError(f"scale must be >= 1, got {self.scale}")
        if self.noise_sigma < 0:
            raise DegradationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.quant_q < 0:
            raise DegradationError(f"quant_q must be >= 0, got {self.quant_q}")
        if self.kernel_sigma > 0 and self.kernel_size < 1:
            self.kernel_size = BD_KERNEL_SIZE

    @property
    def blurred(self) -> bool:
        return self.kernel_sigma > 0

    @staticmethod
    def bd(scale: int, noise_sigma: float = 0.0, quant_q: float = 0.0) -> "DegradationSpec":
        """Blur-kernel downsampling with the conventional sigma=1.6, 13 taps."""
        return DegradationSpec(scale=scale, kernel_sigma=BD_KERNEL_SIGMA,
                               kernel_size=BD_KERNEL_SIZE, noise_sigma=noise_sigma,
                               quant_q=quant_q)

    def to_manifest(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in (
            ("scale", self.scale), ("kernel_sigma", self.kernel_sigma),
            ("kernel_size", self.kernel_size), ("noise_sigma", self.noise_sigma),
            ("quant_q", self.quant_q), ("proxy_block", self.proxy_block)))

    @staticmethod
    def from_manifest(text: str) -> "DegradationSpec":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, _, value = line.partition("=")
            fields[key] = value
        return DegradationSpec(
            scale=int(fields.get("scale", 1)),
            kernel_sigma=float(fields.get("kernel_sigma", 0.0)),
            kernel_size=int(fields.get("kernel_size", 0)),
            noise_sigma=float(fields.get("noise_sigma", 0.0)),
            quant_q=float(fields.get("quant_q", 0.0)),
            proxy_block=int(fields.get("proxy_block", DEFAULT_PROXY_BLOCK)))


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """1D Gaussian taps normalized to sum exactly 1."""
    if size < 1 or size % 2 == 0:
        raise DegradationError(f"kernel size must be odd and positive, got {size}")
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Separable reflect-padded convolution along one axis."""
    radius = len(taps) // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros_like(img)
    for i, w in enumerate(taps):
        sl = [slice(None)] * img.ndim
        sl[axis] = slice(i, i + img.shape[axis])
        out += w * padded[tuple(sl)]
    return out


def blur(frame: np.ndarray, sigma: float, size: int) -> np.ndarray:
    """Separable Gaussian blur of (C, H, W)."""
    taps = gaussian_kernel(sigma, size)
    return _convolve_axis(_convolve_axis(frame, taps, axis=1), taps, axis=2)


@lru_cache(maxsize=None)
def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Catmull-Rom resampling matrix; the kernel is stretched (antialiased)
    when shrinking."""
    mat = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    stretch = max(ratio, 1.0)
    support = 2.0 * stretch
    for i in range(n_out):
        src = (i + 0.5) * ratio - 0.5
        lo = math.floor(src - support) + 1
        hi = math.floor(src + support)
        taps = np.arange(lo, hi + 1)
        weights = _catmull_rom_np((src - taps) / stretch)
        weights = weights / weights.sum()
        idx = np.clip(taps, 0, n_in - 1)
        for j, wgt in zip(idx, weights):
            mat[i, j] += wgt
    mat.flags.writeable = False
    return mat


def _catmull_rom_np(t: np.ndarray) -> np.ndarray:
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = 1.5 * t[near] ** 3 - 2.5 * t[near] ** 2 + 1.0
    out[far] = -0.5 * t[far] ** 3 + 2.5 * t[far] ** 2 - 4.0 * t[far] + 2.0
    return out


def bicubic_resize(frame: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bicubic resize of (C, H, W); antialiased when shrinking."""
    c, h, w = frame.shape
    mh = _resize_matrix(h, out_h)
    mw = _resize_matrix(w, out_w)
    return np.einsum("ij,cjk,lk->cil", mh, frame, mw, optimize=True)


def quantize(coefficients: np.ndarray, step) -> np.ndarray:
    """Round-to-nearest (ties to even) on a uniform grid of the given step."""
    return np.round(coefficients / step) * step


@lru_cache(maxsize=None)
def _step_table(block: int) -> np.ndarray:
    """Radial frequency weighting (1 + u + v) / 255 for a unit quality."""
    u = np.arange(block)[:, None]
    v = np.arange(block)[None, :]
    table = (1.0 + u + v) / 255.0
    table.flags.writeable = False
    return table


def compress_proxy(frame: np.ndarray, q: float,
                   block: int = DEFAULT_PROXY_BLOCK) -> np.ndarray:
    """Quantize each block's DCT coefficients; q = 0 returns a copy."""
    if q < 0:
        raise DegradationError(f"quality step scale must be >= 0, got {q}")
    if q == 0:
        return frame.copy()
    c, h, w = frame.shape
    ph = (block - h % block) % block
    pw = (block - w % block) % block
    padded = np.pad(frame, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    hp, wp = padded.shape[1:]
    gh, gw = hp // block, wp // block
    patches = (padded.reshape(c, gh, block, gw, block)
               .transpose(0, 1, 3, 2, 4))
    coeff = dct2_batch(patches)
    coeff = quantize(coeff, q * _step_table(block))
    restored = idct2_batch(coeff)
    out = restored.transpose(0, 1, 3, 2, 4).reshape(c, hp, wp)
    return np.ascontiguousarray(out[:, :h, :w])


def degrade(hr_seq: np.ndarray, spec: DegradationSpec, seed: int) -> np.ndarray:
    """Eq-style pipeline over a (T, C, H, W) sequence, deterministic per seed.

    Per-frame randomness derives from seed XOR frame index so frames can be
    processed independently without changing the result.
    """
    t, c, h, w = hr_seq.shape
    if h % spec.scale or w % spec.scale:
        raise DegradationError(
            f"scale {spec.scale} does not divide frame size {h}x{w}")
    out_frames = []
    for ti in range(t):
        frame = hr_seq[ti].astype(np.float64)
        if spec.blurred:
            frame = blur(frame, spec.kernel_sigma, spec.kernel_size)
            if spec.scale > 1:
                frame = frame[:, ::spec.scale, ::spec.scale]
        elif spec.scale > 1:
            frame = bicubic_resize(frame, h // spec.scale, w // spec.scale)
        if spec.noise_sigma > 0:
            rng = np.random.default_rng(seed ^ ti)
            frame = frame + rng.normal(0.0, spec.noise_sigma, size=frame.shape)
        if spec.quant_q > 0:
            frame = compress_proxy(frame, spec.quant_q, spec.proxy_block)
        out_frames.append(frame)
    return np.stack(out_frames)


def spectral_curve(frame: np.ndarray, band_lo: int, band_hi: int,
                   block: int = DEFAULT_PROXY_BLOCK) -> tuple[np.ndarray, np.ndarray]:
    """Mean absolute DCT amplitude per radial band r = u + v over all blocks.

    Returns (bands, amplitudes) restricted to [band_lo, band_hi].
    """
    max_band = 2 * (block - 1)
    if not 0 <= band_lo <= band_hi <= max_band:
        raise DegradationError(
            f"band range [{band_lo}, {band_hi}] invalid for block {block} "
            f"(max radial band {max_band})")
    c, h, w = frame.shape
    ph = (block - h % block) % block
    pw = (block - w % block) % block
    padded = np.pad(frame, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    gh, gw = padded.shape[1] // block, padded.shape[2] // block
    patches = padded.reshape(c, gh, block, gw, block).transpose(0, 1, 3, 2, 4)
    coeff = np.abs(dct2_batch(patches))                     # (C, gh, gw, B, B)
    u = np.arange(block)[:, None]
    v = np.arange(block)[None, :]
    radial = u + v
    bands = np.arange(band_lo, band_hi + 1)
    amps = np.array([coeff[..., radial == r].mean() for r in bands])
    return bands, amps
