"""
This module defines the finite-difference gradient check used to verify every backward pass.
"""

# stdlib imports
from typing import Callable, Dict, Sequence

# 3rd-party imports
import numpy as np

# project imports
from defs import GRAD_CHECK_EPSILON
from exceptions import ConfigError
from nn.tensor import Parameter, Tensor


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def grad_check_by_parameter(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    epsilon: float = GRAD_CHECK_EPSILON,
    coords_per_param: int = 6,
    seed: int = 0,
) -> Dict[str, float]:
    """
    Compare analytic gradients with central finite differences on a sample of coordinates of
    each parameter. Returns the worst relative error per parameter name.

    loss_fn must be deterministic and return a scalar; parameters must be 64-bit and dropout
    disabled, otherwise the comparison is meaningless.
    """
    for param in params:
        if param.dtype != np.float64:
            raise ConfigError(f'grad_check needs 64-bit parameters, "{param.name}" is {param.dtype}')

    for param in params:
        param.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {id(param): (param.grad.copy() if param.grad is not None else np.zeros_like(param.data)) for param in params}

    rng = np.random.default_rng(seed)
    errors = {}
    for idx, param in enumerate(params):
        flat = param.data.reshape(-1)
        count = min(coords_per_param, flat.size)
        coords = np.sort(rng.choice(flat.size, size=count, replace=False))
        worst = 0.0
        for coord in coords:
            original = flat[coord]
            flat[coord] = original + epsilon
            loss_plus = float(loss_fn().data)
            flat[coord] = original - epsilon
            loss_minus = float(loss_fn().data)
            flat[coord] = original

            numeric = (loss_plus - loss_minus) / (2 * epsilon)
            worst = max(worst, relative_error(float(analytic[id(param)].reshape(-1)[coord]), numeric))
        errors[param.name or f'param{idx}'] = worst

    for param in params:
        param.zero_grad()
    return errors


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    epsilon: float = GRAD_CHECK_EPSILON,
    coords_per_param: int = 6,
    seed: int = 0,
) -> float:
    """Max relative error |a - n| / max(|a|, |n|, 1e-8) over the sampled coordinates"""
    errors = grad_check_by_parameter(loss_fn, params, epsilon=epsilon, coords_per_param=coords_per_param, seed=seed)
    return max(errors.values()) if errors else 0.0
