"""
This module defines the Adam optimizer used to train every model.
"""

# stdlib imports
from dataclasses import dataclass, field
import math
from typing import Dict, List, Sequence

# 3rd-party imports
import numpy as np

# project imports
from exceptions import ConfigError, NumericalError
from nn.tensor import Parameter


@dataclass
class AdamState:
    """First/second moment estimates per parameter name plus the shared step counter"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """
    Adam with bias correction. Gradients are zeroed after every step.
    """
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        if lr <= 0:
            raise ConfigError(f'learning rate must be positive, got {lr}')
        self.params: List[Parameter] = list(params)

        names = [param.name for param in self.params]
        if len(set(names)) != len(names):
            raise ConfigError('parameter names must be unique within a model')

        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for param in self.params:
            self.state.first_moments[param.name] = np.zeros_like(param.data)
            self.state.second_moments[param.name] = np.zeros_like(param.data)

    def step(self) -> None:
        # Check everything first so a bad gradient never leaves the model half-updated
        for param in self.params:
            if param.grad is not None and not np.all(np.isfinite(param.grad)):
                bad = int(param.grad.size - np.count_nonzero(np.isfinite(param.grad)))
                raise NumericalError(
                    f'non-finite gradient in parameter "{param.name}" '
                    f'({bad} of {param.grad.size} entries, step {self.state.step + 1})'
                )

        state = self.state
        state.step += 1
        correction1 = 1.0 - state.beta1 ** state.step
        correction2 = 1.0 - state.beta2 ** state.step
        step_size = state.lr * math.sqrt(correction2) / correction1

        for param in self.params:
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            m = state.first_moments[param.name]
            v = state.second_moments[param.name]
            m *= state.beta1
            m += (1.0 - state.beta1) * grad
            v *= state.beta2
            v += (1.0 - state.beta2) * grad * grad
            param.data -= (step_size * m / (np.sqrt(v) + state.eps * math.sqrt(correction2))).astype(param.dtype)

        self.zero_grad()

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None
