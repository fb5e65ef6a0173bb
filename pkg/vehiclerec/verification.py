"""
This module defines the gradient-check suite behind `main.py gradcheck`.

Every layer is checked on a small random input in 64-bit precision with dropout off. A layer's
output is reduced to a scalar as sum(out * R) for a fixed random R, so every output entry
contributes its own gradient. The three training losses are checked end to end on toy batches.

Setting debug.GRADIENT_FAULT to one of the check names routes that check's output through an op
whose backward doubles the gradient, and the check has to fail.
"""

# stdlib imports
import logging
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

# 3rd-party imports
import numpy as np

# project imports
from data.contracts import ContractRecord, ContractSchema
import debug
from defs import GRAD_CHECK_EPSILON, GRAD_CHECK_TOLERANCE
from exceptions import VerificationError
from models.nbo import NboConfig, NboModel, NumericStats, build_vocabularies, nbo_loss
from models.pointwise import PointwiseConfig, PointwiseModel, pair_inputs, pointwise_loss
from models.sasrec_auc import SasrecConfig, SasrecModel, TrainingWindows, make_batch, sample_negative_rows, sasrec_loss
from nn import ops
from nn.gradcheck import grad_check_by_parameter
from nn.layers import Embedding, FeedForward, LayerNorm, Linear, MultiHeadSelfAttention, TransformerBlock
from nn.tensor import Parameter, Tensor, precision


logger = logging.getLogger(__name__)

SUITE_SEED = 1234

LossBuilder = Callable[[np.random.Generator, Callable[[Tensor], Tensor]], Tuple[Callable[[], Tensor], List[Parameter]]]


class GradCheckResult(NamedTuple):
    name: str
    max_error: float
    passed: bool
    worst_parameter: str

    def to_json(self) -> Dict:
        return {
            'name': self.name,
            'max_error': self.max_error,
            'passed': self.passed,
            'worst_parameter': self.worst_parameter,
        }


def faulty_identity(x: Tensor) -> Tensor:
    """Forward is the identity, backward doubles the gradient"""
    def backward(grad):
        x.accumulate_grad(2.0 * grad)

    return Tensor(x.data.copy(), parents=(x,), backward_fn=backward, op='gradient_fault')


def _input(rng: np.random.Generator, *shape: int) -> Parameter:
    return Parameter(rng.normal(size=shape), name='input')


def _dropout_rng(seed: int = SUITE_SEED) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _layer_check(rng, hook, layer, x: Parameter, *args) -> Tuple[Callable[[], Tensor], List[Parameter]]:
    """Reduce layer(x, *args) to sum(out * R); checks the layer parameters and the input"""
    layer.eval()
    direction = rng.normal(size=layer(x, *args).shape)

    def loss_fn() -> Tensor:
        return ops.sum(ops.mul(hook(layer(x, *args)), direction))

    return loss_fn, layer.parameters() + [x]


def _op_check(rng, hook, op, x: Parameter) -> Tuple[Callable[[], Tensor], List[Parameter]]:
    direction = rng.normal(size=op(x).shape)

    def loss_fn() -> Tensor:
        return ops.sum(ops.mul(hook(op(x)), direction))

    return loss_fn, [x]


def check_linear(rng, hook):
    return _layer_check(rng, hook, Linear(4, 3, rng), _input(rng, 5, 4))


def check_layer_norm(rng, hook):
    layer = LayerNorm(4)
    layer.gain.data = rng.normal(1.0, 0.5, size=4)
    layer.bias.data = rng.normal(size=4)
    return _layer_check(rng, hook, layer, _input(rng, 5, 4))


def check_softmax(rng, hook):
    return _op_check(rng, hook, lambda x: ops.softmax(x, axis=-1), _input(rng, 3, 5))


def check_masked_softmax(rng, hook):
    mask = rng.random((4, 5)) < 0.6
    mask[:, 0] = True
    mask[3] = False
    return _op_check(rng, hook, lambda x: ops.softmax(x, axis=-1, mask=mask), _input(rng, 4, 5))


def check_attention(rng, hook):
    layer = MultiHeadSelfAttention(4, 2, 0.0, rng, _dropout_rng())
    key_valid = np.array([[False, True, True], [True, True, True]])
    return _layer_check(rng, hook, layer, _input(rng, 2, 3, 4), key_valid)


def check_feed_forward(rng, hook):
    return _layer_check(rng, hook, FeedForward(4, 6, 0.0, rng, _dropout_rng()), _input(rng, 2, 3, 4))


def check_transformer_block(rng, hook):
    layer = TransformerBlock(4, 2, 0.0, rng, _dropout_rng())
    key_valid = np.array([[False, True, True], [True, True, True]])
    return _layer_check(rng, hook, layer, _input(rng, 2, 3, 4), key_valid)


def check_embedding(rng, hook):
    layer = Embedding(5, 3, rng)
    indices = np.array([0, 2, 2, 4])
    direction = rng.normal(size=(len(indices), 3))

    def loss_fn() -> Tensor:
        return ops.sum(ops.mul(hook(layer(indices)), direction))

    return loss_fn, layer.parameters()


def check_bce(rng, hook):
    logits = _input(rng, 2, 3)
    labels = (rng.random((2, 3)) < 0.5).astype(np.float64)
    weights = rng.random((2, 3))
    return (lambda: hook(ops.bce_with_logits(logits, labels, weights))), [logits]


def check_cross_entropy(rng, hook):
    logits = _input(rng, 4, 5)
    targets = np.array([0, 3, 3, 1])
    return (lambda: hook(ops.cross_entropy(logits, targets))), [logits]


def check_sasrec_loss(rng, hook):
    """Two dealers, one full and one left-padded window, bids and purchases as targets"""
    config = SasrecConfig(embed_dim=4, blocks=1, heads=2, max_seq_len=4, dropout=0.0, negatives_per_position=2, seed=SUITE_SEED)
    model = SasrecModel(3, config).eval()
    vehicle_features = rng.normal(size=(6, 3))
    windows = TrainingWindows(
        dealer_ids=np.array([0, 1]),
        input_rows=np.array([[-1, 0, 1, 2], [-1, -1, 4, 5]]),
        input_relations=np.array([[0, 1, 0, 1], [0, 0, 1, 1]]),
        target_rows=np.array([[-1, 1, 2, 3], [-1, -1, 5, 0]]),
        target_relations=np.array([[0, 0, 1, 0], [0, 0, 1, 0]]),
    )
    batch = make_batch(windows, np.arange(2), vehicle_features)
    negative_rows = sample_negative_rows(rng, batch.target_rows, len(vehicle_features), config.negatives_per_position)

    def loss_fn() -> Tensor:
        return hook(sasrec_loss(model, batch, negative_rows, vehicle_features, bid_loss_weight=0.5))

    return loss_fn, model.parameters()


def check_pointwise_loss(rng, hook):
    model = PointwiseModel(3, 4, PointwiseConfig(hidden=[5, 4], seed=SUITE_SEED)).eval()
    inputs = pair_inputs(rng.normal(size=(6, 3)), rng.normal(size=(6, 4)), np.array([0, 1, 0, 1, 0, 1]))
    labels = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    return (lambda: hook(pointwise_loss(model, inputs, labels))), model.parameters()


def check_nbo_loss(rng, hook):
    """Four contracts with two categorical and two numerical columns over five classes"""
    schema = ContractSchema(categorical=('occupation', 'region'), numerical=('credit_score', 'age'), n_classes=5)
    records = [
        ContractRecord(0, ('a', 'x'), (600.0, 31.0), 1, 1),
        ContractRecord(1, ('b', 'x'), (720.0, 45.0), 2, 4),
        ContractRecord(2, ('a', 'y'), (680.0, 52.0), 0, 3),
        ContractRecord(3, ('c', 'y'), (590.0, 27.0), 4, 0),
    ]
    model = NboModel(
        schema, build_vocabularies(records, schema), NumericStats.fit(records, len(schema.numerical)),
        NboConfig(max_embedding_dim=4, numerical_width=3, seed=SUITE_SEED),
    ).eval()
    model.head.weight.data = rng.normal(size=model.head.weight.shape)
    encoded = model.encode(records)
    return (lambda: hook(nbo_loss(model, encoded))), model.parameters()


GRADCHECK_SUITE: Dict[str, LossBuilder] = {
    'linear': check_linear,
    'layer_norm': check_layer_norm,
    'softmax': check_softmax,
    'masked_softmax': check_masked_softmax,
    'attention': check_attention,
    'feed_forward': check_feed_forward,
    'transformer_block': check_transformer_block,
    'embedding': check_embedding,
    'bce_with_logits': check_bce,
    'cross_entropy': check_cross_entropy,
    'sasrec_loss': check_sasrec_loss,
    'pointwise_loss': check_pointwise_loss,
    'nbo_loss': check_nbo_loss,
}


def run_gradcheck_suite(
    names: Optional[Sequence[str]] = None,
    tolerance: float = GRAD_CHECK_TOLERANCE,
    epsilon: float = GRAD_CHECK_EPSILON,
    fault: Optional[str] = None,
) -> List[GradCheckResult]:
    """
    Run the named checks (all of them by default). `fault` falls back to debug.GRADIENT_FAULT.
    """
    fault = fault if fault is not None else debug.GRADIENT_FAULT
    names = list(GRADCHECK_SUITE) if names is None else list(names)
    unknown = sorted(set(names) - set(GRADCHECK_SUITE))
    if unknown:
        raise VerificationError(f'unknown gradient checks {unknown}')
    if fault is not None and fault not in GRADCHECK_SUITE:
        logger.warning('Gradient fault "%s" does not name a check and has no effect', fault)

    results = []
    with precision(np.float64):
        for idx, name in enumerate(names):
            rng = np.random.default_rng([SUITE_SEED, idx])
            hook = faulty_identity if name == fault else (lambda out: out)
            loss_fn, params = GRADCHECK_SUITE[name](rng, hook)
            errors = grad_check_by_parameter(loss_fn, params, epsilon=epsilon, seed=idx)
            worst = max(errors, key=errors.get)
            result = GradCheckResult(name, float(errors[worst]), bool(errors[worst] < tolerance), worst)
            logger.info('gradcheck %-18s max relative error %.3e (%s)', name, result.max_error, 'ok' if result.passed else 'FAILED')
            results.append(result)
    return results


def verify_gradients(results: Sequence[GradCheckResult]) -> None:
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationError(f'gradient check failed for {failed}')
