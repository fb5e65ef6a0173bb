"""
This module defines the Tensor class, the carrier of all the model math, and the tape that
drives reverse-mode differentiation.

A Tensor wraps a dense row-major numpy array. Every op in nn/ops.py returns a new Tensor that
remembers its parents and a closure that pushes the output gradient back into them. Calling
`backward()` on a scalar walks that graph in reverse topological order.

Training runs in 32-bit floats. Gradient checking switches the whole kernel to 64-bit with the
`precision` context manager, since finite differences are useless at 32-bit resolution.
"""

# stdlib imports
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

# 3rd-party imports
import numpy as np

# project imports
import debug
from exceptions import NumericalError


_DTYPE = np.float32
_GRAD_ENABLED = True


def get_dtype() -> np.dtype:
    """The float type new Tensors are created with"""
    return _DTYPE


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the float type of newly created Tensors"""
    global _DTYPE
    previous = _DTYPE
    _DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = previous


@contextmanager
def no_grad() -> Iterator[None]:
    """Ops run inside this block don't record the graph. Used for inference"""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the shape of the input it flowed from"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def check_finite(data: np.ndarray, op: str) -> None:
    """NaN or Inf anywhere in an op output is an error state"""
    if debug.CHECK_FINITE and not np.all(np.isfinite(data)):
        bad = int(np.size(data) - np.count_nonzero(np.isfinite(data)))
        raise NumericalError(f'{op} produced {bad} non-finite value(s) in a tensor of shape {np.shape(data)}')


class Tensor:
    """
    Dense array with an optional gradient and the graph edges needed to compute it.
    """
    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward_fn: Optional[Callable[[np.ndarray], None]] = None,
        op: str = 'leaf',
    ) -> None:
        if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating) and parents:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=get_dtype())
        self.grad: Optional[np.ndarray] = None
        self.op = op

        track = _GRAD_ENABLED and (requires_grad or any(p.requires_grad for p in parents))
        self.requires_grad = requires_grad or track
        self._parents: Tuple[Tensor, ...] = tuple(parents) if track else ()
        self._backward_fn = backward_fn if track else None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, grad: np.ndarray) -> None:
        """Add an incoming gradient, summing over any broadcast dimensions"""
        grad = unbroadcast(np.asarray(grad), self.shape).astype(self.data.dtype, copy=False)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Reverse-mode pass from this tensor. With no seed gradient the tensor must be a scalar.
        """
        if grad is None:
            if self.size != 1:
                raise NumericalError(f'backward() needs a seed gradient for a tensor of shape {self.shape}')
            grad = np.ones_like(self.data)

        order = self._topological_order()
        self.accumulate_grad(grad)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def _topological_order(self) -> List["Tensor"]:
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    # Operator sugar, the math lives in nn/ops.py
    def __add__(self, other) -> "Tensor":
        from nn import ops
        return ops.add(self, other)

    def __radd__(self, other) -> "Tensor":
        from nn import ops
        return ops.add(other, self)

    def __sub__(self, other) -> "Tensor":
        from nn import ops
        return ops.sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        from nn import ops
        return ops.sub(other, self)

    def __mul__(self, other) -> "Tensor":
        from nn import ops
        return ops.mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        from nn import ops
        return ops.mul(other, self)

    def __neg__(self) -> "Tensor":
        from nn import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other) -> "Tensor":
        from nn import ops
        return ops.matmul(self, other)

    def __repr__(self) -> str:
        return f'Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}, requires_grad={self.requires_grad})'


class Parameter(Tensor):
    """A trainable leaf tensor. Its name is assigned by the Module that owns it"""
    def __init__(self, data, name: str = '') -> None:
        super().__init__(np.array(data, dtype=get_dtype()), requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f'Parameter(name={self.name}, shape={self.shape}, dtype={self.dtype})'


def as_tensor(value) -> Tensor:
    """Wrap constants (arrays, python numbers) so ops can treat every input the same way"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)
