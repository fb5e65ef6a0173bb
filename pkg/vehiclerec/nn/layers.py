"""
This module defines the Module base class and all the layers used by the models.

A Module owns Parameters and child Modules as plain attributes. The base class walks those
attributes to name parameters, switch between train and eval mode, convert the float type
for gradient checks, and export/import state for checkpoints.

Layers here:
    * Linear, Embedding, LayerNorm, Dropout
    * MultiHeadSelfAttention (causal, with key padding)
    * FeedForward and TransformerBlock (pre-layer-norm, residual)
"""

# stdlib imports
from collections import OrderedDict
import math
from typing import Dict, Iterator, List, Optional, Tuple

# 3rd-party imports
import numpy as np

# project imports
from defs import EMBEDDING_INIT_STD, LAYER_NORM_EPS
from exceptions import ConfigError, DimensionError
from nn import ops
from nn.tensor import Parameter, Tensor, get_dtype


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(get_dtype())


class Module:
    """
    Base class for every layer and model. Subclasses assign Parameters, Modules, or lists of
    Modules as attributes and override `forward`.
    """
    def __init__(self) -> None:
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(
            'Each Module subclass must override its forward method.'
        )

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for attr, value in self.__dict__.items():
            if isinstance(value, Module):
                yield attr, value
            elif isinstance(value, (list, tuple)):
                for idx, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f'{attr}.{idx}', item

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Parameter]]:
        """Yields (dotted name, parameter) in attribute order, stamping the name on the parameter"""
        for attr, value in self.__dict__.items():
            if isinstance(value, Parameter):
                value.name = f'{prefix}{attr}'
                yield value.name, value
        for name, child in self.children():
            yield from child.named_parameters(prefix=f'{prefix}{name}.')

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def train(self) -> "Module":
        self.training = True
        for _, child in self.children():
            child.train()
        return self

    def eval(self) -> "Module":
        self.training = False
        for _, child in self.children():
            child.eval()
        return self

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def zero_(self) -> "Module":
        """Set every parameter to zero. An all-zero model scores every candidate the same"""
        for param in self.parameters():
            param.data[...] = 0
        return self

    def astype(self, dtype) -> "Module":
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, param.data.copy()) for name, param in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = OrderedDict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise ConfigError(f'state mismatch, missing: {sorted(missing)}, unexpected: {sorted(unexpected)}')
        for name, param in params.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise DimensionError(f'parameter {name} has shape {param.shape}, state has {value.shape}')
            param.data = value.astype(param.dtype).copy()


class Linear(Module):
    """x @ W + b, with W stored as [in_features x out_features]"""
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(xavier_uniform(rng, in_features, out_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(f'Linear expects {self.in_features} input features, got shape {x.shape}')
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = ops.add(out, self.bias)
        return out


class Embedding(Module):
    def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.num_embeddings = num_embeddings
        self.dim = dim
        self.weight = Parameter(rng.normal(0.0, EMBEDDING_INIT_STD, size=(num_embeddings, dim)))

    def forward(self, indices: np.ndarray) -> Tensor:
        return ops.take_rows(self.weight, indices)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS) -> None:
        super().__init__()
        if dim < 1:
            raise ConfigError(f'LayerNorm width must be >= 1, got {dim}')
        self.eps = eps
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, eps=self.eps)


class Dropout(Module):
    """Inverted dropout drawing from a shared counter-based generator, so runs are reproducible"""
    def __init__(self, rate: float, rng: np.random.Generator) -> None:
        super().__init__()
        if not 0 <= rate < 1:
            raise ConfigError(f'dropout rate must be in [0, 1), got {rate}')
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.rate, self.rng, training=self.training)


def causal_mask(length: int) -> np.ndarray:
    """Lower-triangular boolean mask: position t may attend to positions <= t"""
    return np.tril(np.ones((length, length), dtype=bool))


class MultiHeadSelfAttention(Module):
    """
    Scaled dot-product self-attention, softmax(Q K^T / sqrt(d / h) + mask) V per head, with heads
    concatenated and projected. Future positions and padded keys are masked as -inf logits,
    so their weight is exactly zero.

    The weights of the last forward pass are kept in `last_weights` as [batch x heads x n x n].
    """
    def __init__(self, dim: int, heads: int, dropout: float, rng: np.random.Generator, dropout_rng: np.random.Generator) -> None:
        super().__init__()
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f'embedding width {dim} is not divisible by {heads} heads')
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng, bias=False)  # a key bias shifts every logit of a query row equally
        self.value = Linear(dim, dim, rng)
        self.output = Linear(dim, dim, rng)
        self.attention_dropout = Dropout(dropout, dropout_rng)
        self.last_weights: Optional[np.ndarray] = None

    def _split_heads(self, x: Tensor, batch: int, length: int) -> Tensor:
        x = ops.reshape(x, (batch, length, self.heads, self.head_dim))
        return ops.transpose(x, (0, 2, 1, 3))

    def forward(self, x: Tensor, key_valid: Optional[np.ndarray] = None) -> Tensor:
        """
        x is [batch x n x d] or a single sequence [n x d]. key_valid marks real (non-padding)
        positions, shape [batch x n]; None means every position is real.
        """
        squeeze = x.ndim == 2
        if squeeze:
            x = ops.reshape(x, (1,) + x.shape)
            if key_valid is not None:
                key_valid = np.asarray(key_valid)[None, :]
        batch, length, _ = x.shape

        mask = causal_mask(length)[None, None, :, :]
        if key_valid is not None:
            mask = mask & np.asarray(key_valid, dtype=bool)[:, None, None, :]

        q = self._split_heads(self.query(x), batch, length)
        k = self._split_heads(self.key(x), batch, length)
        v = self._split_heads(self.value(x), batch, length)

        logits = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.head_dim))
        weights = ops.softmax(logits, axis=-1, mask=mask)
        self.last_weights = weights.data
        weights = self.attention_dropout(weights)

        context = ops.transpose(ops.matmul(weights, v), (0, 2, 1, 3))
        out = self.output(ops.reshape(context, (batch, length, self.dim)))
        if squeeze:
            out = ops.reshape(out, (length, self.dim))
        return out


def masked_self_attention(x: Tensor, attention: MultiHeadSelfAttention, key_valid: Optional[np.ndarray] = None) -> Tensor:
    """Causal self-attention of a [n x d] (or batched) input through the given attention weights"""
    return attention(x, key_valid=key_valid)


class FeedForward(Module):
    """Position-wise Linear -> ReLU -> Dropout -> Linear"""
    def __init__(self, dim: int, hidden: int, dropout: float, rng: np.random.Generator, dropout_rng: np.random.Generator) -> None:
        super().__init__()
        self.inner = Linear(dim, hidden, rng)
        self.outer = Linear(hidden, dim, rng)
        self.hidden_dropout = Dropout(dropout, dropout_rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.outer(self.hidden_dropout(ops.relu(self.inner(x))))


class TransformerBlock(Module):
    """
    Pre-layer-norm block:
        h = x + Dropout(Attention(LayerNorm(x)))
        out = h + Dropout(FeedForward(LayerNorm(h)))
    Padding positions are zeroed on the way out.
    """
    def __init__(self, dim: int, heads: int, dropout: float, rng: np.random.Generator, dropout_rng: np.random.Generator) -> None:
        super().__init__()
        self.attention_norm = LayerNorm(dim)
        self.attention = MultiHeadSelfAttention(dim, heads, dropout, rng, dropout_rng)
        self.attention_dropout = Dropout(dropout, dropout_rng)
        self.feed_forward_norm = LayerNorm(dim)
        self.feed_forward = FeedForward(dim, dim, dropout, rng, dropout_rng)
        self.feed_forward_dropout = Dropout(dropout, dropout_rng)

    def forward(self, x: Tensor, key_valid: Optional[np.ndarray] = None) -> Tensor:
        h = ops.add(x, self.attention_dropout(self.attention(self.attention_norm(x), key_valid=key_valid)))
        out = ops.add(h, self.feed_forward_dropout(self.feed_forward(self.feed_forward_norm(h))))
        if key_valid is not None:
            out = ops.mul(out, np.asarray(key_valid, dtype=out.dtype)[..., None])
        return out
