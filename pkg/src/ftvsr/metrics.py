"""PSNR and SSIM evaluation on float frames in [0, 1].

PSNR of identical frames returns the 99 dB cap so reports stay orderable.
SSIM uses the standard 11x11 Gaussian window (sigma 1.5), C1=(0.01*peak)^2,
C2=(0.03*peak)^2, valid-mode filtering, averaged over channels. Y-channel
evaluation converts through BT.601 luma first.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

PSNR_CAP_DB = 99.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


class MetricError(ValueError):
    pass


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); identical inputs return the cap value."""
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    return np.outer(k, k)


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Valid-mode 2D filtering via sliding windows (desk-scale images)."""
    view = np.lib.stride_tricks.sliding_window_view(img, window.shape)
    return np.tensordot(view, window, axes=([2, 3], [0, 1]))


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean local SSIM; multichannel inputs average their per-channel scores."""
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3:
        return float(np.mean([ssim(a[c], b[c], peak) for c in range(a.shape[0])]))
    if a.ndim != 2:
        raise MetricError(f"expected (H, W) or (C, H, W), got {a.shape}")
    if min(a.shape) < _SSIM_WINDOW:
        raise MetricError(f"image {a.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    window = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = _filter_valid(a, window)
    mu_b = _filter_valid(b, window)
    var_a = _filter_valid(a * a, window) - mu_a ** 2
    var_b = _filter_valid(b * b, window) - mu_b ** 2
    cov = _filter_valid(a * b, window) - mu_a * mu_b
    score = (((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
             ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(score.mean())


def to_y_channel(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma from a (3, H, W) frame in [0, 1] (no studio-range offset)."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise MetricError(f"expected a (3, H, W) frame, got {rgb.shape}")
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]


@dataclass
class EvalReport:
    """Per-frame PSNR/SSIM pairs plus their arithmetic means."""
    channel_mode: str                       # "rgb" | "y"
    per_frame: list[tuple[float, float]] = field(default_factory=list)

    @property
    def mean_psnr_db(self) -> float:
        return float(np.mean([p for p, _ in self.per_frame])) if self.per_frame else 0.0

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([s for _, s in self.per_frame])) if self.per_frame else 0.0

    def add(self, psnr_db: float, ssim_score: float) -> None:
        self.per_frame.append((psnr_db, ssim_score))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frame_index", "psnr_db", "ssim"])
        for i, (p, s) in enumerate(self.per_frame):
            writer.writerow([i, f"{p:.6f}", f"{s:.6f}"])
        writer.writerow(["mean", f"{self.mean_psnr_db:.6f}", f"{self.mean_ssim:.6f}"])
        return buf.getvalue()


def evaluate_sequence(outputs: np.ndarray, reference: np.ndarray,
                      channel_mode: str = "rgb") -> EvalReport:
    """Frame-by-frame PSNR/SSIM of (T, C, H, W) outputs against a reference."""
    if outputs.shape != reference.shape:
        raise MetricError(f"shape mismatch: {outputs.shape} vs {reference.shape}")
    if channel_mode not in ("rgb", "y"):
        raise MetricError(f"channel_mode must be 'rgb' or 'y', got {channel_mode!r}")
    report = EvalReport(channel_mode=channel_mode)
    for t in range(outputs.shape[0]):
        a, b = outputs[t], reference[t]
        if channel_mode == "y":
            a, b = to_y_channel(a), to_y_channel(b)
        report.add(psnr(a, b), ssim(a, b))
    return report
