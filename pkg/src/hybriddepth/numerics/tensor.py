"""Dense float64 tensor with reverse-mode automatic differentiation.

Every value flowing through the depth network is a ``Tensor``: a numpy
float64 array plus an optional gradient buffer and, while a forward pass is
being recorded, links to the parent tensors it was computed from. Calling
``backward()`` on a scalar loss walks those links in reverse topological
order exactly once, accumulating ``dloss/dt`` into ``t.grad`` for every
tensor with ``requires_grad`` set. The recorded links are released after the
walk; gradients persist and keep accumulating across forward/backward rounds
until ``zero_grad`` style clearing.

Only the primitives the network actually needs are implemented. All of them
store data in row-major float64 and define exact analytic backward rules,
which the finite-difference checker in ``gradcheck`` validates.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError, DimensionError

__all__ = ["Tensor", "no_grad", "is_grad_enabled", "concat", "where", "maximum", "minimum"]


_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager disabling graph recording (pure forward evaluation)."""

    def __enter__(self):
        self._prev = is_grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._op = "leaf"

    # ---------------------------------------------------------------- basics

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        head = np.array2string(self.data, precision=4, threshold=8)
        return f"Tensor({head}, shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # ------------------------------------------------------------- recording

    @staticmethod
    def _node(data: np.ndarray, parents: tuple, backward, op: str) -> "Tensor":
        out = Tensor(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
            out._op = op
        else:
            out._op = op
        return out

    # -------------------------------------------------------------- backward

    def backward(self) -> None:
        """Accumulate dself/dt into ``t.grad`` for every reachable tensor.

        The tape is released afterwards; repeated forward/backward rounds
        keep adding into ``grad`` until it is cleared.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() requires a scalar loss, got shape {self.shape}")
        order = self._toposort()
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is not None:
                parent_grads = node._backward(g)
                for parent, pg in zip(node._parents, parent_grads):
                    if pg is None or not parent.requires_grad:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg
                node._parents = ()
                node._backward = None

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return order

    # ------------------------------------------------------------ arithmetic

    def __add__(self, other):
        other = _wrap(other)
        data = self.data + other.data
        sa, sb = self.shape, other.shape
        return Tensor._node(
            data, (self, other),
            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
            "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = _wrap(other)
        data = self.data - other.data
        sa, sb = self.shape, other.shape
        return Tensor._node(
            data, (self, other),
            lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
            "sub")

    def __rsub__(self, other):
        return _wrap(other).__sub__(self)

    def __mul__(self, other):
        other = _wrap(other)
        data = self.data * other.data
        a, b = self, other
        return Tensor._node(
            data, (self, other),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
            "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        data = self.data / other.data
        a, b = self, other
        return Tensor._node(
            data, (self, other),
            lambda g: (_unbroadcast(g / b.data, a.shape),
                       _unbroadcast(-g * a.data / (b.data * b.data), b.shape)),
            "div")

    def __rtruediv__(self, other):
        return _wrap(other).__truediv__(self)

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float):
        if not np.isscalar(exponent):
            raise ContractError("pow supports scalar exponents only")
        data = self.data ** exponent
        x = self.data
        return Tensor._node(
            data, (self,),
            lambda g: (g * exponent * x ** (exponent - 1),),
            "pow")

    def __matmul__(self, other):
        other = _wrap(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise DimensionError(
                f"matmul requires 2-d operands with matching inner dims, got {self.shape} @ {other.shape}")
        data = self.data @ other.data
        a, b = self, other
        return Tensor._node(
            data, (self, other),
            lambda g: (g @ b.data.T, a.data.T @ g),
            "matmul")

    # ---------------------------------------------------------- elementwise

    def exp(self):
        out = np.exp(self.data)
        return Tensor._node(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        x = self.data
        return Tensor._node(np.log(x), (self,), lambda g: (g / x,), "log")

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._node(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._node(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor._node(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def abs(self):
        x = self.data
        return Tensor._node(np.abs(x), (self,), lambda g: (g * np.sign(x),), "abs")

    # ------------------------------------------------------------ reductions

    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._node(data, (self,), back, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        data = self.data.mean(axis=axis, keepdims=keepdims)
        shape = self.shape
        count = self.size if axis is None else np.prod(
            [shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy() / count,)

        return Tensor._node(data, (self,), back, "mean")

    # ----------------------------------------------------------------- shape

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._node(self.data.reshape(shape), (self,),
                            lambda g: (g.reshape(old),), "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return Tensor._node(np.transpose(self.data, axes), (self,),
                            lambda g: (np.transpose(g, inv),), "transpose")

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, index):
        data = self.data[index]
        shape = self.shape

        def back(g):
            out = np.zeros(shape)
            np.add.at(out, index, g)
            return (out,)

        return Tensor._node(np.array(data, copy=True), (self,), back, "getitem")


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._node(data, tuple(tensors), back, "concat")


def where(cond: np.ndarray, a, b) -> Tensor:
    """Elementwise select with a constant (non-differentiable) condition."""
    a, b = _wrap(a), _wrap(b)
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)
    return Tensor._node(
        data, (a, b),
        lambda g: (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                   _unbroadcast(np.where(cond, 0.0, g), b.shape)),
        "where")


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.data >= b.data
    return where(take_a, a, b)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to the first argument."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.data <= b.data
    return where(take_a, a, b)
