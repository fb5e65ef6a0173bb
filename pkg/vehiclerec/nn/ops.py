"""
This module defines the differentiable ops that both models are built from.

Each op computes its forward value with numpy, checks it for NaN/Inf, and registers a closure
that maps the output gradient onto its inputs. Only the ops the two models actually need live here.
"""

# stdlib imports
from typing import Optional, Sequence, Tuple, Union

# 3rd-party imports
import numpy as np

# project imports
from exceptions import DimensionError
from nn.tensor import Tensor, as_tensor, check_finite


Operand = Union[Tensor, np.ndarray, float, int]


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    """Build the output Tensor of an op in the float type of its first input"""
    data = np.asarray(data).astype(parents[0].dtype, copy=False)
    check_finite(data, op)
    return Tensor(data, parents=parents, backward_fn=backward_fn, op=op)


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        if a.requires_grad:
            a.accumulate_grad(grad)
        if b.requires_grad:
            b.accumulate_grad(grad)

    return _make(a.data + b.data, (a, b), backward, 'add')


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        if a.requires_grad:
            a.accumulate_grad(grad)
        if b.requires_grad:
            b.accumulate_grad(-grad)

    return _make(a.data - b.data, (a, b), backward, 'sub')


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        if a.requires_grad:
            a.accumulate_grad(grad * b.data)
        if b.requires_grad:
            b.accumulate_grad(grad * a.data)

    return _make(a.data * b.data, (a, b), backward, 'mul')


def matmul(a: Operand, b: Operand) -> Tensor:
    """
    Matrix product over the last two axes, broadcasting any leading batch axes.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f'matmul needs operands with rank >= 2, got {a.shape} and {b.shape}')
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f'matmul inner dimensions differ: {a.shape} @ {b.shape}')

    def backward(grad):
        if a.requires_grad:
            a.accumulate_grad(np.matmul(grad, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b.accumulate_grad(np.matmul(np.swapaxes(a.data, -1, -2), grad))

    return _make(np.matmul(a.data, b.data), (a, b), backward, 'matmul')


def relu(x: Tensor) -> Tensor:
    active = x.data > 0

    def backward(grad):
        x.accumulate_grad(grad * active)

    return _make(np.where(active, x.data, 0), (x,), backward, 'relu')


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = x.shape

    def backward(grad):
        x.accumulate_grad(grad.reshape(original))

    return _make(x.data.reshape(shape), (x,), backward, 'reshape')


def transpose(x: Tensor, axes: Tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        x.accumulate_grad(np.transpose(grad, inverse))

    return _make(np.transpose(x.data, axes), (x,), backward, 'transpose')


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    extents = [t.shape[axis] for t in tensors]
    boundaries = np.cumsum(extents)[:-1]

    def backward(grad):
        for tensor, piece in zip(tensors, np.split(grad, boundaries, axis=axis)):
            if tensor.requires_grad:
                tensor.accumulate_grad(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, 'concat')


def take_rows(weight: Tensor, indices: np.ndarray) -> Tensor:
    """Embedding lookup: rows of a 2-D weight gathered by an integer index array of any shape"""
    indices = np.asarray(indices, dtype=np.int64)

    def backward(grad):
        full = np.zeros_like(weight.data)
        np.add.at(full, indices.reshape(-1), grad.reshape(-1, weight.shape[1]))
        weight.accumulate_grad(full)

    return _make(weight.data[indices], (weight,), backward, 'take_rows')


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        x.accumulate_grad(np.broadcast_to(grad, x.shape))

    return _make(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward, 'sum')


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Numerically stable softmax along `axis`.

    `mask` is a boolean array broadcastable to x; False entries behave as -inf logits and get
    exactly zero weight. A slice with every entry masked yields all zeros instead of NaN.
    """
    if x.shape[axis] == 0:
        raise DimensionError(f'softmax over an empty axis of a tensor with shape {x.shape}')

    if mask is None:
        shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
        exps = np.exp(shifted)
    else:
        mask = np.broadcast_to(mask, x.shape)
        blocked = np.where(mask, x.data, -np.inf)
        peak = np.max(blocked, axis=axis, keepdims=True)
        peak = np.where(np.isfinite(peak), peak, 0)
        exps = np.where(mask, np.exp(np.where(mask, x.data - peak, 0)), 0)

    totals = np.sum(exps, axis=axis, keepdims=True)
    out = exps / np.where(totals > 0, totals, 1)

    def backward(grad):
        dot = np.sum(grad * out, axis=axis, keepdims=True)
        x.accumulate_grad(out * (grad - dot))

    return _make(out, (x,), backward, 'softmax')


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization over the last axis followed by an affine map"""
    width = x.shape[-1]
    centered = x.data - np.mean(x.data, axis=-1, keepdims=True)
    variance = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + eps)
    normed = centered * inv_std

    def backward(grad):
        if gain.requires_grad:
            gain.accumulate_grad((grad * normed).reshape(-1, width).sum(axis=0))
        if bias.requires_grad:
            bias.accumulate_grad(grad.reshape(-1, width).sum(axis=0))
        if x.requires_grad:
            dnormed = grad * gain.data
            x.accumulate_grad(
                inv_std / width * (
                    width * dnormed
                    - np.sum(dnormed, axis=-1, keepdims=True)
                    - normed * np.sum(dnormed * normed, axis=-1, keepdims=True)
                )
            )

    return _make(normed * gain.data + bias.data, (x, gain, bias), backward, 'layer_norm')


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout: kept activations are scaled by 1 / (1 - rate) at train time"""
    if not training or rate == 0:
        return x

    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)

    def backward(grad):
        x.accumulate_grad(grad * keep)

    return _make(x.data * keep, (x,), backward, 'dropout')


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -(np.maximum(-z, 0) + np.log1p(np.exp(-np.abs(z))))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    positive = z >= 0
    exp_neg = np.exp(-np.abs(z))
    return np.where(positive, 1.0 / (1.0 + exp_neg), exp_neg / (1.0 + exp_neg))


def bce_with_logits(logits: Tensor, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """
    Weighted binary cross-entropy on raw scores, summed to a scalar.

    loss = sum(w * -(y * log sigmoid(s) + (1 - y) * log sigmoid(-s)))

    A zero weight removes an entry from both the loss and the gradient.
    """
    labels = np.broadcast_to(np.asarray(labels, dtype=logits.dtype), logits.shape)
    weights = np.broadcast_to(np.asarray(weights, dtype=logits.dtype), logits.shape)
    z = logits.data
    per_entry = -(labels * _log_sigmoid(z) + (1 - labels) * _log_sigmoid(-z))

    def backward(grad):
        logits.accumulate_grad(grad * weights * (_sigmoid(z) - labels))

    return _make(np.sum(weights * per_entry), (logits,), backward, 'bce_with_logits')


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over rows of a [batch x classes] logit matrix"""
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(logits.shape[0])
    shifted = logits.data - np.max(logits.data, axis=-1, keepdims=True)
    log_totals = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    log_probs = shifted - log_totals
    count = logits.shape[0]

    def backward(grad):
        probs = np.exp(log_probs)
        probs[rows, targets] -= 1
        logits.accumulate_grad(grad * probs / count)

    return _make(-np.sum(log_probs[rows, targets]) / count, (logits,), backward, 'cross_entropy')
