"""Synthetic video clips for toy-scale training and tests.

Each clip is a drifting oriented sinusoid plus a moving bright rectangle
over a color gradient, which gives the restorer both smooth structure and
sharp edges to recover. Deterministic per seed.
"""
from __future__ import annotations

import os

import numpy as np

from ftvsr.ppm import write_sequence


def make_clip(frames: int, height: int, width: int, seed: int) -> np.ndarray:
    """One (T, 3, H, W) clip with values in [0, 1]."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width] / max(height, width)

    angle = rng.uniform(0, np.pi)
    spatial_freq = rng.uniform(2.0, 5.0)
    phase_speed = rng.uniform(0.2, 0.7)
    carrier = spatial_freq * (np.cos(angle) * xs + np.sin(angle) * ys)
    color_mix = rng.uniform(0.4, 1.0, size=3)
    grad_dir = rng.uniform(-1, 1, size=(3, 2))

    rect_h = max(2, height // 4)
    rect_w = max(2, width // 4)
    rect_y0 = rng.uniform(0, height - rect_h)
    rect_x0 = rng.uniform(0, width - rect_w)
    rect_vy = rng.uniform(-1.5, 1.5)
    rect_vx = rng.uniform(-1.5, 1.5)
    rect_gain = rng.uniform(0.25, 0.4, size=3)

    out = np.zeros((frames, 3, height, width))
    for t in range(frames):
        wave = np.sin(2 * np.pi * (carrier + phase_speed * t))
        y0 = int(round(rect_y0 + rect_vy * t)) % max(1, height - rect_h + 1)
        x0 = int(round(rect_x0 + rect_vx * t)) % max(1, width - rect_w + 1)
        for c in range(3):
            base = 0.5 + 0.18 * color_mix[c] * wave
            base = base + 0.1 * (grad_dir[c, 0] * xs + grad_dir[c, 1] * ys)
            base[y0:y0 + rect_h, x0:x0 + rect_w] += rect_gain[c]
            out[t, c] = base
    return np.clip(out, 0.0, 1.0)


def make_corpus(root: str | os.PathLike, clips: int, frames: int,
                height: int, width: int, seed: int) -> list[str]:
    """Write `clips` PPM clip directories under root; returns their paths."""
    paths = []
    for i in range(clips):
        clip_dir = os.path.join(root, f"clip_{i:03d}")
        write_sequence(clip_dir, make_clip(frames, height, width, seed + 1000 * i))
        paths.append(clip_dir)
    return paths
