"""Adam with cosine-annealed learning rate, plus the single training step.

Betas default to (0.9, 0.99). The moment buffers serialize alongside model
checkpoints so training can resume with an intact step counter.
"""
from __future__ import annotations

import math

import numpy as np

from ftvsr.model import ModelParams, charbonnier_loss, forward_sequence
from ftvsr.tensor import NumericsError, Tensor


def cosine_lr(base: float, step: int, total_steps: int) -> float:
    """Half-cosine decay from base to 0 over total_steps."""
    if total_steps <= 0:
        return base
    frac = min(max(step, 0), total_steps) / total_steps
    return base * 0.5 * (1.0 + math.cos(math.pi * frac))


class Adam:
    def __init__(self, params: list[Tensor], beta1: float = 0.9, beta2: float = 0.99,
                 eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float) -> None:
        """One update from the accumulated gradients; missing grads are zero."""
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else 0.0
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if not np.all(np.isfinite(p.data)):
                raise NumericsError("parameter update produced non-finite values")

    def state_tensors(self, names: list[str]) -> dict[str, np.ndarray]:
        out = {}
        for name, m, v in zip(names, self.m, self.v):
            out[f"adam.m.{name}"] = m
            out[f"adam.v.{name}"] = v
        return out

    def load_state(self, names: list[str], tensors: dict[str, np.ndarray],
                   step_count: int) -> None:
        self.step_count = step_count
        for i, name in enumerate(names):
            self.m[i] = np.ascontiguousarray(tensors[f"adam.m.{name}"])
            self.v[i] = np.ascontiguousarray(tensors[f"adam.v.{name}"])


def train_step(batch: tuple[Tensor, Tensor], params: ModelParams, optimizer: Adam,
               lr: float, scheme: str | None = None) -> float:
    """Forward + Charbonnier loss + backward + one Adam update; returns loss."""
    lr_seq, hr_seq = batch
    optimizer.zero_grad()
    sr_seq = forward_sequence(lr_seq, params, scheme=scheme)
    loss = charbonnier_loss(sr_seq, hr_seq)
    loss.backward()
    optimizer.step(lr)
    return loss.item()
