"""
This module defines the point-wise, non-sequential attribute baseline.

Every (dealer, vehicle, relation) triple is scored on its own by a feed-forward network over
    dealer features ⊕ vehicle features ⊕ one-hot(relation)
with no access to the order of a dealer's history. Each training interaction is a positive and
is paired with one uniformly sampled vehicle of the same dealer and relation as a negative.
Candidates are ranked by their score under the purchase relation.
"""

# stdlib imports
from dataclasses import asdict, dataclass, field
import logging
from typing import List, Optional

# 3rd-party imports
import numpy as np

# project imports
from data.records import Dataset
from data.splits import LeaveOneOutSplit
from defs import AUCTION_TOP_K, NUM_RELATIONS, ModelKind, Relation
from evaluation import EvalProtocol, build_cases, case_ranks, ranking_metrics
from exceptions import ConfigError, NumericalError
from models.base import EvalCase, Ranker, run_in_blocks, train_with_early_stopping
from nn import ops
from nn.checkpoint import load_checkpoint, restore_config, save_checkpoint
from nn.layers import Linear, Module
from nn.optim import Adam
from nn.tensor import Tensor, no_grad
from stats import TrackerStat, TrainingLog


logger = logging.getLogger(__name__)


@dataclass
class PointwiseConfig:
    hidden: List[int] = field(default_factory=lambda: [128, 64])
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 256
    seed: int = 0
    patience: int = 3
    validation_negatives: int = 103

    def __post_init__(self) -> None:
        self.hidden = [int(width) for width in self.hidden]
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError(f'hidden widths must be positive, got {self.hidden}')
        if self.learning_rate <= 0:
            raise ConfigError(f'learning_rate must be positive, got {self.learning_rate}')
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 0:
            raise ConfigError('epochs and patience must be >= 0 and batch_size >= 1')


class PointwiseModel(Module):
    def __init__(self, dealer_features: int, item_features: int, config: PointwiseConfig) -> None:
        super().__init__()
        self.config = config
        self.dealer_features = dealer_features
        self.item_features = item_features

        rng = np.random.default_rng(config.seed)
        widths = [dealer_features + item_features + NUM_RELATIONS] + config.hidden
        self.hidden_layers = [Linear(w_in, w_out, rng) for w_in, w_out in zip(widths[:-1], widths[1:])]
        self.output = Linear(widths[-1], 1, rng)

    def forward(self, inputs: np.ndarray) -> Tensor:
        """[B x (U + F + 2)] -> scores [B]"""
        x = Tensor(inputs)
        for layer in self.hidden_layers:
            x = ops.relu(layer(x))
        out = self.output(x)
        return ops.reshape(out, (out.shape[0],))

    def hyperparams(self) -> dict:
        return {**asdict(self.config), 'dealer_features': self.dealer_features, 'item_features': self.item_features}


def pair_inputs(dealer_features: np.ndarray, vehicle_features: np.ndarray, relations: np.ndarray) -> np.ndarray:
    """Row-wise dealer ⊕ vehicle ⊕ one-hot relation"""
    one_hot = np.eye(NUM_RELATIONS, dtype=vehicle_features.dtype)[np.asarray(relations, dtype=np.int64)]
    return np.concatenate([dealer_features, vehicle_features, one_hot], axis=1)


def pointwise_loss(model: PointwiseModel, inputs: np.ndarray, labels: np.ndarray) -> Tensor:
    """Mean sigmoid binary cross-entropy"""
    return ops.bce_with_logits(model(inputs), labels, np.full(len(labels), 1.0 / len(labels)))


class PointwiseRanker(Ranker):
    KIND = ModelKind.POINTWISE

    def __init__(self, model: PointwiseModel) -> None:
        self.model = model

    def score_case(self, case: EvalCase, dataset: Dataset) -> np.ndarray:
        count = len(case.candidate_ids)
        dealer = np.repeat(dataset.dealer_features[[dataset.dealer_row(case.dealer_id)]], count, axis=0)
        inputs = pair_inputs(dealer, dataset.features_of(case.candidate_ids), np.full(count, int(Relation.PURCHASE)))
        self.model.eval()
        with no_grad():
            return run_in_blocks(lambda block: self.model(block).data, inputs)


def training_pairs(dataset: Dataset, split: LeaveOneOutSplit) -> np.ndarray:
    """[P x 3] (dealer row, vehicle row, relation) for every training interaction"""
    pairs = [
        (dataset.dealer_row(i.dealer_id), dataset.vehicle_row(i.vehicle_id), int(i.relation))
        for i in split.train_interactions
    ]
    return np.array(pairs, dtype=np.int64).reshape(-1, 3)


def train_pointwise(
    dataset: Dataset,
    split: LeaveOneOutSplit,
    config: PointwiseConfig,
    log: Optional[TrainingLog] = None,
) -> PointwiseModel:
    pairs = training_pairs(dataset, split)
    if len(pairs) == 0:
        raise ConfigError('empty train split: there are no training interactions')
    if dataset.n_vehicles < 2:
        raise ConfigError('negative sampling needs at least 2 vehicles')

    log = log if log is not None else TrainingLog()
    model = PointwiseModel(dataset.dealer_feature_dim, dataset.vehicle_feature_dim, config)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    logger.info('Training %s on %d positives', ModelKind.POINTWISE.value, len(pairs))

    validation_cases = []
    if split.validation:
        protocol = EvalProtocol(k=[AUCTION_TOP_K], negatives=config.validation_negatives, seed=config.seed)
        validation_cases = build_cases(split, dataset, protocol, which='validation')
    ranker = PointwiseRanker(model)

    def validate():
        if not validation_cases:
            return None
        return ranking_metrics(case_ranks(ranker, validation_cases, dataset), [AUCTION_TOP_K])

    def run_epoch(epoch: int, losses: TrackerStat) -> None:
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), config.batch_size):
            batch = pairs[order[start:start + config.batch_size]]
            negatives = (batch[:, 1] + rng.integers(1, dataset.n_vehicles, size=len(batch))) % dataset.n_vehicles
            dealers = dataset.dealer_features[np.concatenate([batch[:, 0], batch[:, 0]])]
            vehicles = dataset.vehicle_features[np.concatenate([batch[:, 1], negatives])]
            relations = np.concatenate([batch[:, 2], batch[:, 2]])
            labels = np.concatenate([np.ones(len(batch)), np.zeros(len(batch))])

            loss = pointwise_loss(model, pair_inputs(dealers, vehicles, relations), labels)
            if not np.isfinite(loss.item()):
                raise NumericalError(f'pointwise loss is {loss.item()} at epoch {epoch}, batch starting at {start}')
            loss.backward()
            optimizer.step()
            losses.add(loss.item())

    return train_with_early_stopping(model, config.epochs, config.patience, run_epoch, validate, log, f'hr@{AUCTION_TOP_K}')


def save_pointwise(path: str, model: PointwiseModel) -> None:
    save_checkpoint(path, ModelKind.POINTWISE.value, model.hyperparams(), model.state_dict())


def load_pointwise(path: str) -> PointwiseModel:
    checkpoint = load_checkpoint(path, expected_kind=ModelKind.POINTWISE.value)
    model_args, config = restore_config(checkpoint, PointwiseConfig, ['dealer_features', 'item_features'])
    model = PointwiseModel(model_args['dealer_features'], model_args['item_features'], config)
    model.load_state_dict(checkpoint.params)
    return model.eval()
