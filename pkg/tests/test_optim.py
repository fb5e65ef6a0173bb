# 3rd-party imports
import numpy as np
import pytest

# project imports
from exceptions import ConfigError, NumericalError
from nn import ops
from nn.optim import Adam
from nn.tensor import Parameter


def test_adam_minimizes_a_quadratic():
    w = Parameter(np.array([3.0, -2.0]), name='w')
    optimizer = Adam([w], lr=0.1)
    for _ in range(300):
        ops.sum(ops.mul(w, w)).backward()
        optimizer.step()
    assert np.all(np.abs(w.data) < 0.25)


def test_first_step_moves_each_coordinate_by_the_learning_rate():
    w = Parameter(np.array([1.0, 1.0]), name='w')
    optimizer = Adam([w], lr=0.01)
    ops.sum(ops.mul(w, np.array([5.0, -0.1]))).backward()
    optimizer.step()
    np.testing.assert_allclose(w.data, [0.99, 1.01], rtol=1e-5)


def test_step_clears_gradients():
    w = Parameter(np.ones(2), name='w')
    optimizer = Adam([w])
    ops.sum(w).backward()
    optimizer.step()
    assert w.grad is None


def test_non_finite_gradient_names_the_parameter_and_leaves_weights_alone():
    good = Parameter(np.ones(2), name='encoder.weight')
    bad = Parameter(np.ones(2), name='head.bias')
    optimizer = Adam([good, bad])
    good.grad = np.ones(2, dtype=np.float32)
    bad.grad = np.array([np.nan, 1.0], dtype=np.float32)
    with pytest.raises(NumericalError, match='head.bias'):
        optimizer.step()
    np.testing.assert_array_equal(good.data, np.ones(2))


def test_duplicate_parameter_names():
    with pytest.raises(ConfigError):
        Adam([Parameter(np.ones(1), name='w'), Parameter(np.ones(1), name='w')])


def test_learning_rate_must_be_positive():
    with pytest.raises(ConfigError):
        Adam([Parameter(np.ones(1), name='w')], lr=0.0)
