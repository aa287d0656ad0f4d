"""Central finite-difference gradient checking.

The checker perturbs each input coordinate by +-h, rebuilds the forward
pass, and compares the analytic gradient elementwise against
(f(x+h) - f(x-h)) / 2h with the tolerance |analytic - fd| < tol * (|fd| + 1e-8).
All differentiable ops register a small self-contained case in OP_CASES so
the test suite and the `gradcheck` CLI verb share one registry.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ftvsr.tensor import Tensor, concat

DEFAULT_STEP = 1e-4
DEFAULT_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    passed: bool


def finite_difference(loss_fn: Callable[[], Tensor], inputs: list[Tensor],
                      step: float = DEFAULT_STEP) -> list[np.ndarray]:
    """Central-difference gradients of a scalar loss wrt each input tensor.

    loss_fn must re-read the inputs' .data on every call; coordinates are
    perturbed in place and restored.
    """
    grads = []
    for tensor in inputs:
        flat = tensor.data.reshape(-1)
        grad = np.zeros_like(flat)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = loss_fn().item()
            flat[i] = saved - step
            lo = loss_fn().item()
            flat[i] = saved
            grad[i] = (hi - lo) / (2.0 * step)
        grads.append(grad.reshape(tensor.shape))
    return grads


def compare(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst elementwise relative error between the two gradients."""
    rel = np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)
    return float(rel.max()) if rel.size else 0.0


def check(loss_fn: Callable[[], Tensor], inputs: list[Tensor],
          step: float = DEFAULT_STEP, tol: float = DEFAULT_TOL) -> float:
    """Return the worst relative error over all inputs; caller asserts < tol."""
    for tensor in inputs:
        tensor.zero_grad()
        tensor.requires_grad = True
    loss_fn().backward()
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in inputs]
    numeric = finite_difference(loss_fn, inputs, step)
    return max(compare(a, n) for a, n in zip(analytic, numeric))


def _weighted(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Random-weighted sum, so every output coordinate influences the loss.

    Weights are O(1) which keeps finite differences well conditioned.
    """
    w = Tensor(rng.uniform(0.5, 1.5, size=out.shape))
    return (out * w).sum()


def op_cases(seed: int = 7) -> dict[str, Callable[[], tuple[Callable[[], Tensor], list[Tensor]]]]:
    """Registry of per-op gradient-check cases: name -> builder."""
    def build(factory):
        return factory

    def case_add():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        return (lambda: _weighted(a + b, np.random.default_rng(seed + 1)), [a, b])

    def case_add_broadcast():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        return (lambda: _weighted(a + b, np.random.default_rng(seed + 1)), [a, b])

    def case_sub():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
        return (lambda: _weighted(a - b, np.random.default_rng(seed + 1)), [a, b])

    def case_mul():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        return (lambda: _weighted(a * b, np.random.default_rng(seed + 1)), [a, b])

    def case_neg():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(6,)), requires_grad=True)
        return (lambda: _weighted(-a, np.random.default_rng(seed + 1)), [a])

    def case_scalar_ops():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        return (lambda: _weighted(a * 2.5 + 0.75, np.random.default_rng(seed + 1)), [a])

    def case_matmul():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        return (lambda: _weighted(a @ b, np.random.default_rng(seed + 1)), [a, b])

    def case_softmax():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        return (lambda: _weighted(a.softmax(axis=1), np.random.default_rng(seed + 1)), [a])

    def case_concat():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        return (lambda: _weighted(concat([a, b], axis=0), np.random.default_rng(seed + 1)), [a, b])

    def case_reshape():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(2, 6)), requires_grad=True)
        return (lambda: _weighted(a.reshape(3, 4), np.random.default_rng(seed + 1)), [a])

    def case_permute():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        return (lambda: _weighted(a.permute(2, 0, 1), np.random.default_rng(seed + 1)), [a])

    def case_slice():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        return (lambda: _weighted(a[1:3, ::2], np.random.default_rng(seed + 1)), [a])

    def case_take():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        idx = np.array([0, 5, 5, 11, 3])
        return (lambda: _weighted(a.take(idx), np.random.default_rng(seed + 1)), [a])

    def case_sum():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        return (lambda: _weighted(a.sum(axis=0), np.random.default_rng(seed + 1)), [a])

    def case_mean():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
        return (lambda: _weighted(a.mean(axis=1), np.random.default_rng(seed + 1)), [a])

    def case_sqrt():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
        return (lambda: _weighted(a.sqrt(), np.random.default_rng(seed + 1)), [a])

    def case_tanh():
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        return (lambda: _weighted(a.tanh(), np.random.default_rng(seed + 1)), [a])

    return {
        "add": build(case_add),
        "add_broadcast": build(case_add_broadcast),
        "sub": build(case_sub),
        "mul": build(case_mul),
        "neg": build(case_neg),
        "scalar_ops": build(case_scalar_ops),
        "matmul": build(case_matmul),
        "softmax": build(case_softmax),
        "concat": build(case_concat),
        "reshape": build(case_reshape),
        "permute": build(case_permute),
        "slice": build(case_slice),
        "take": build(case_take),
        "sum": build(case_sum),
        "mean": build(case_mean),
        "sqrt": build(case_sqrt),
        "tanh": build(case_tanh),
    }


def corrupted_case(seed: int = 7):
    """A deliberately wrong gradient rule; the checker must flag it.

    Forward is x*x but the registered backward pretends it is 3x, so the
    analytic gradient disagrees with finite differences.
    """
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(0.5, 1.5, size=(3, 3)), requires_grad=True)

    def bad_square(t: Tensor) -> Tensor:
        out = t._track(t.data * t.data, (t,), lambda g: (3.0 * g,))
        return out

    return (lambda: _weighted(bad_square(x), np.random.default_rng(seed + 1)), [x])


def run_op_suite(seed: int = 7, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    results = []
    for name, builder in op_cases(seed).items():
        loss_fn, inputs = builder()
        err = check(loss_fn, inputs, tol=tol)
        results.append(CheckResult(name, err, err < tol))
    return results
