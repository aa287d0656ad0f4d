"""Dense float64 tensors with tape-based reverse-mode differentiation.

Everything downstream (DCT, attention, the restoration model) runs on this
class. Storage is a contiguous row-major numpy array; the graph is built
eagerly and walked backwards from a scalar loss. Only first-order gradients
are supported. Every public operation checks its result for NaN/Inf and
raises NumericsError instead of letting poison propagate.
"""
from __future__ import annotations

import numpy as np


class NumericsError(ArithmeticError):
    """A public operation produced NaN or Inf."""


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


def _check_finite(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NumericsError(f"{op} produced non-finite values")
    return data


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """N-d float64 array with optional gradient tracking.

    `grad` is lazily allocated by backward() and accumulates across calls
    until zero_grad() resets it.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # make numpy defer mixed ndarray-Tensor arithmetic to our reflected ops
    __array_priority__ = 1000.0

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        # maps upstream grad -> tuple of per-parent grads (None to skip)
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def to_numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- factories -----------------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=np.float64), requires_grad)

    @staticmethod
    def ones(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.ones(shape, dtype=np.float64), requires_grad)

    # -- graph plumbing -------------------------------------------------------

    def _track(self, data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate dSelf/dLeaf into .grad of every requires_grad tensor.

        Self must be scalar. Propagation uses a per-call gradient map, so
        calling backward twice on the same graph adds the same leaf
        gradients twice (accumulation contract).
        """
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    _check_finite(pg, "backward")
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg
            elif node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g

    # -- elementwise arithmetic ----------------------------------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=np.float64))

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        data = _check_finite(self.data + other.data, "add")
        return self._track(
            data, (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)))

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._coerce(other)
        data = _check_finite(self.data - other.data, "sub")
        return self._track(
            data, (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)))

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        data = _check_finite(self.data * other.data, "mul")
        return self._track(
            data, (self, other),
            lambda g: (_unbroadcast(g * other.data, self.shape),
                       _unbroadcast(g * self.data, other.shape)))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self._track(-self.data, (self,), lambda g: (-g,))

    def __truediv__(self, scalar) -> "Tensor":
        if isinstance(scalar, Tensor):
            raise TypeError("tensor/tensor division is not supported; divide by a scalar")
        return self * (1.0 / float(scalar))

    # -- linear algebra --------------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        other = self._coerce(other)
        if self.ndim != 2 or other.ndim != 2:
            raise ShapeError(f"matmul needs 2-d operands, got {self.shape} @ {other.shape}")
        if self.shape[1] != other.shape[0]:
            raise ShapeError(f"matmul inner dims differ: {self.shape} @ {other.shape}")
        data = _check_finite(self.data @ other.data, "matmul")
        return self._track(
            data, (self, other),
            lambda g: (g @ other.data.T, self.data.T @ g))

    __matmul__ = matmul

    def transpose(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError("transpose() is for 2-d tensors; use permute for higher rank")
        return self.permute(1, 0)

    # -- shape movement ---------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        data = self.data.reshape(shape)
        return self._track(data, (self,), lambda g: (g.reshape(old),))

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if sorted(axes) != list(range(self.ndim)):
            raise ShapeError(f"permute axes {axes} are not a permutation of rank {self.ndim}")
        inverse = tuple(np.argsort(axes))
        data = np.ascontiguousarray(self.data.transpose(axes))
        return self._track(data, (self,), lambda g: (g.transpose(inverse),))

    def __getitem__(self, key) -> "Tensor":
        data = np.ascontiguousarray(self.data[key])
        shape = self.shape

        def backward(g: np.ndarray):
            gx = np.zeros(shape, dtype=np.float64)
            gx[key] += g
            return (gx,)

        return self._track(data, (self,), backward)

    def take(self, flat_index: np.ndarray) -> "Tensor":
        """Gather from the flattened tensor; output has flat_index's shape.

        Backward scatter-adds, so repeated indices are fine. The index array
        itself is constant (not differentiated).
        """
        idx = np.asarray(flat_index, dtype=np.intp)
        data = self.data.reshape(-1)[idx]
        shape = self.shape

        def backward(g: np.ndarray):
            gx = np.zeros(int(np.prod(shape)), dtype=np.float64)
            np.add.at(gx, idx.reshape(-1), g.reshape(-1))
            return (gx.reshape(shape),)

        return self._track(data, (self,), backward)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def backward(g: np.ndarray):
            if axis is None:
                return (np.broadcast_to(g.reshape(()), shape).copy(),)
            g_k = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g_k, shape).copy(),)

        return self._track(np.asarray(data), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- nonlinearities ----------------------------------------------------------

    def softmax(self, axis: int) -> "Tensor":
        """Numerically stabilized softmax along `axis`; slices sum to 1."""
        if not -self.ndim <= axis < self.ndim:
            raise ShapeError(f"softmax axis {axis} out of range for rank {self.ndim}")
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        _check_finite(y, "softmax")

        def backward(g: np.ndarray):
            inner = (g * y).sum(axis=axis, keepdims=True)
            return (y * (g - inner),)

        return self._track(y, (self,), backward)

    def sqrt(self) -> "Tensor":
        y = _check_finite(np.sqrt(self.data), "sqrt")

        def backward(g: np.ndarray):
            return (g / (2.0 * y),)

        return self._track(y, (self,), backward)

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)

        def backward(g: np.ndarray):
            return (g * (1.0 - y * y),)

        return self._track(y, (self,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    """Concatenate along `axis`; gradient splits back to the inputs."""
    parts = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    rank = parts[0].ndim
    for t in parts[1:]:
        if t.ndim != rank:
            raise ShapeError("concat operands must share rank")
        for ax in range(rank):
            if ax != axis % rank and t.shape[ax] != parts[0].shape[ax]:
                raise ShapeError(
                    f"concat shapes {parts[0].shape} and {t.shape} differ off axis {axis}")
    data = np.concatenate([t.data for t in parts], axis=axis)
    sizes = [t.shape[axis % rank] for t in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray):
        slicer = [slice(None)] * rank
        grads = []
        for i in range(len(parts)):
            slicer[axis % rank] = slice(int(offsets[i]), int(offsets[i + 1]))
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return parts[0]._track(data, tuple(parts), backward)


def parameters_of(tree) -> list[Tensor]:
    """Flatten a nested dict/list of tensors into a deterministic list."""
    out: list[Tensor] = []
    if isinstance(tree, Tensor):
        out.append(tree)
    elif isinstance(tree, dict):
        for key in tree:
            out.extend(parameters_of(tree[key]))
    elif isinstance(tree, (list, tuple)):
        for item in tree:
            out.extend(parameters_of(item))
    return out
