"""
This module defines the Next-Best-Offer network: a deep embedding classifier over contracts that
predicts the vehicle class of the renewal.

    categorical variables  -> one embedding table each, width min(32, ceil(cardinality / 2))
    previous vehicle class -> its own embedding table
    numerical variables    -> standardized, then Linear + ReLU
    concatenation          -> contraction stack, each Linear + ReLU halving the width until it is <= 64
                           -> Linear head -> softmax over the C classes

Vocabularies and standardization statistics are computed from the training split only and are
frozen into the checkpoint together with the weights.
"""

# stdlib imports
from dataclasses import asdict, dataclass, field
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence

# 3rd-party imports
import numpy as np

# project imports
from data.contracts import ContractRecord, ContractSchema
from defs import NBO_TOP_K, ModelKind
from evaluation import rank_of_positive, ranking_metrics
from exceptions import ConfigError, NumericalError
from models.base import ClassRanker, run_in_blocks, train_with_early_stopping
from nn import ops
from nn.checkpoint import load_checkpoint, require_keys, restore_config, save_checkpoint
from nn.layers import Embedding, Linear, Module
from nn.optim import Adam
from nn.tensor import Tensor, no_grad
from stats import TrackerStat, TrainingLog


logger = logging.getLogger(__name__)

UNKNOWN_INDEX = 0
MAX_EMBEDDING_DIM = 32
CONTRACTION_TARGET_WIDTH = 64
LOG_METRIC_NAMES = {f'hr@{NBO_TOP_K}': f'val_hr{NBO_TOP_K}', f'ndcg@{NBO_TOP_K}': f'val_ndcg{NBO_TOP_K}'}


@dataclass
class NboConfig:
    max_embedding_dim: int = MAX_EMBEDDING_DIM
    numerical_width: int = 32
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_size: int = 128
    seed: int = 0
    patience: int = 8
    split_fractions: List[float] = field(default_factory=lambda: [0.7, 0.1, 0.2])

    def __post_init__(self) -> None:
        self.split_fractions = [float(f) for f in self.split_fractions]
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-9 or min(self.split_fractions) < 0:
            raise ConfigError(f'split_fractions must be three non-negative numbers summing to 1, got {self.split_fractions}')
        if self.max_embedding_dim < 1 or self.numerical_width < 1:
            raise ConfigError('embedding and numerical widths must be positive')
        if self.learning_rate <= 0:
            raise ConfigError(f'learning_rate must be positive, got {self.learning_rate}')
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 0:
            raise ConfigError('epochs and patience must be >= 0 and batch_size >= 1')


class Vocabulary:
    """Index 0 is reserved for values never seen in training; known values follow first-occurrence order"""
    def __init__(self, tokens: Sequence[str]) -> None:
        self.tokens = list(tokens)
        self._index = {token: idx + 1 for idx, token in enumerate(self.tokens)}

    def index(self, value: str) -> int:
        return self._index.get(value, UNKNOWN_INDEX)

    @property
    def cardinality(self) -> int:
        """Number of known values"""
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens) + 1

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f'Vocabulary(Size={len(self)}, Tokens={self.tokens[:5]}{"..." if len(self.tokens) > 5 else ""})'


def build_vocabularies(records: Sequence[ContractRecord], schema: ContractSchema) -> Dict[str, Vocabulary]:
    vocabularies = {}
    for column, name in enumerate(schema.categorical):
        seen = {}
        for record in records:
            seen.setdefault(record.categorical[column], None)
        vocabularies[name] = Vocabulary(list(seen))
    return vocabularies


class NumericStats(NamedTuple):
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, records: Sequence[ContractRecord], width: int) -> "NumericStats":
        values = np.array([r.numerical for r in records], dtype=np.float64).reshape(len(records), width)
        if len(records) == 0:
            return cls(np.zeros(width), np.ones(width))
        std = values.std(axis=0)
        return cls(values.mean(axis=0), np.where(std > 0, std, 1.0))

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def embedding_dim(cardinality: int, cap: int = MAX_EMBEDDING_DIM) -> int:
    return max(1, min(cap, math.ceil(cardinality / 2)))


def contraction_widths(width: int, target: int = CONTRACTION_TARGET_WIDTH) -> List[int]:
    """Halve the width until it is <= target; always at least one layer"""
    widths = []
    while True:
        width = max(width // 2, 1)
        widths.append(width)
        if width <= target:
            return widths


class EncodedContracts(NamedTuple):
    categorical: np.ndarray  # [B x n_cat] vocabulary indices
    previous: np.ndarray     # [B]
    numerical: np.ndarray    # [B x n_num], standardized
    targets: np.ndarray      # [B]


class NboModel(Module):
    def __init__(
        self,
        schema: ContractSchema,
        vocabularies: Dict[str, Vocabulary],
        numeric_stats: NumericStats,
        config: NboConfig,
    ) -> None:
        super().__init__()
        if set(vocabularies) != set(schema.categorical):
            raise ConfigError(f'vocabularies {sorted(vocabularies)} do not match the schema categoricals {list(schema.categorical)}')
        if len(numeric_stats.mean) != len(schema.numerical):
            raise ConfigError(f'{len(numeric_stats.mean)} numerical statistics for {len(schema.numerical)} numerical columns')
        self.schema = schema
        self.vocabularies = vocabularies
        self.numeric_stats = numeric_stats
        self.config = config

        rng = np.random.default_rng(config.seed)
        self.categorical_embeddings = [
            Embedding(len(vocabularies[name]), embedding_dim(vocabularies[name].cardinality, config.max_embedding_dim), rng)
            for name in schema.categorical
        ]
        self.previous_class_embedding = Embedding(
            schema.n_classes, embedding_dim(schema.n_classes, config.max_embedding_dim), rng,
        )
        self.numerical_encoder = Linear(len(schema.numerical), config.numerical_width, rng) if schema.numerical else None

        width = sum(e.dim for e in self.categorical_embeddings) + self.previous_class_embedding.dim
        width += config.numerical_width if schema.numerical else 0
        self.contractions = []
        for out_width in contraction_widths(width):
            self.contractions.append(Linear(width, out_width, rng))
            width = out_width
        self.head = Linear(width, schema.n_classes, rng)
        self.head.zero_()

    def encode(self, records: Sequence[ContractRecord]) -> EncodedContracts:
        n_cat, n_num = len(self.schema.categorical), len(self.schema.numerical)
        categorical = np.zeros((len(records), n_cat), dtype=np.int64)
        numerical = np.zeros((len(records), n_num), dtype=np.float64)
        for row, record in enumerate(records):
            if len(record.categorical) != n_cat or len(record.numerical) != n_num:
                raise ConfigError(f'contract {record.contract_id} does not match the schema columns')
            for column, name in enumerate(self.schema.categorical):
                categorical[row, column] = self.vocabularies[name].index(record.categorical[column])
            numerical[row] = record.numerical
        return EncodedContracts(
            categorical=categorical,
            previous=np.array([r.previous_class for r in records], dtype=np.int64),
            numerical=self.numeric_stats.apply(numerical).astype(np.float32),
            targets=np.array([r.target_class for r in records], dtype=np.int64),
        )

    def forward(self, encoded: EncodedContracts) -> Tensor:
        """Class logits [B x C]"""
        parts = [embedding(encoded.categorical[:, column]) for column, embedding in enumerate(self.categorical_embeddings)]
        parts.append(self.previous_class_embedding(encoded.previous))
        if self.numerical_encoder is not None:
            parts.append(ops.relu(self.numerical_encoder(Tensor(encoded.numerical))))
        x = ops.concat(parts, axis=-1)
        for layer in self.contractions:
            x = ops.relu(layer(x))
        return self.head(x)

    def hyperparams(self) -> dict:
        return {**asdict(self.config), 'schema': self.schema.to_json()}

    def extras(self) -> dict:
        return {
            'vocabularies': {name: vocabulary.tokens for name, vocabulary in self.vocabularies.items()},
            'numerical_mean': self.numeric_stats.mean.tolist(),
            'numerical_std': self.numeric_stats.std.tolist(),
        }


def nbo_loss(model: NboModel, encoded: EncodedContracts) -> Tensor:
    return ops.cross_entropy(model(encoded), encoded.targets)


def _pack(encoded: EncodedContracts) -> np.ndarray:
    return np.concatenate([
        encoded.categorical.astype(np.float64),
        encoded.previous[:, None].astype(np.float64),
        encoded.numerical.astype(np.float64),
    ], axis=1)


def nbo_forward(model: NboModel, records: Sequence[ContractRecord]) -> np.ndarray:
    """Class probabilities [B x C], computed in fixed row blocks so each row is independent of the batch"""
    encoded = model.encode(records)
    n_cat = len(model.schema.categorical)

    def forward(block: np.ndarray) -> np.ndarray:
        block_encoded = EncodedContracts(
            categorical=block[:, :n_cat].astype(np.int64),
            previous=block[:, n_cat].astype(np.int64),
            numerical=block[:, n_cat + 1:].astype(np.float32),
            targets=np.zeros(len(block), dtype=np.int64),
        )
        return ops.softmax(model(block_encoded), axis=-1).data

    model.eval()
    with no_grad():
        probabilities = run_in_blocks(forward, _pack(encoded))
    return probabilities.reshape(len(records), model.schema.n_classes)


class NboRanker(ClassRanker):
    KIND = ModelKind.NBO

    def __init__(self, model: NboModel) -> None:
        self.model = model

    def class_scores(self, records: Sequence[ContractRecord]) -> np.ndarray:
        return nbo_forward(self.model, records)


def train_nbo(
    train: Sequence[ContractRecord],
    validation: Sequence[ContractRecord],
    schema: ContractSchema,
    config: NboConfig,
    log: Optional[TrainingLog] = None,
) -> NboModel:
    """Cross-entropy training with Adam; returns the parameters of the best validation HR@5 epoch"""
    if not train:
        raise ConfigError('empty train split: there are no training contracts')

    absent = sorted(set(range(schema.n_classes)) - {r.target_class for r in train})
    if absent:
        logger.warning('%d classes never appear as a training target and stay predictable only through the prior: %s', len(absent), absent)

    log = log if log is not None else TrainingLog(metric_names=LOG_METRIC_NAMES)
    model = NboModel(schema, build_vocabularies(train, schema), NumericStats.fit(train, len(schema.numerical)), config)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    encoded = model.encode(train)
    logger.info('Training %s on %d contracts, %d classes', ModelKind.NBO.value, len(train), schema.n_classes)

    def validate():
        if not validation:
            return None
        scores = nbo_forward(model, validation)
        class_ids = np.arange(schema.n_classes)
        ranks = [rank_of_positive(scores[idx], r.target_class, class_ids) for idx, r in enumerate(validation)]
        return ranking_metrics(ranks, [NBO_TOP_K])

    def run_epoch(epoch: int, losses: TrackerStat) -> None:
        order = rng.permutation(len(train))
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            batch = EncodedContracts(*(part[rows] for part in encoded))
            loss = nbo_loss(model, batch)
            if not np.isfinite(loss.item()):
                raise NumericalError(f'nbo loss is {loss.item()} at epoch {epoch}, batch starting at {start}')
            loss.backward()
            optimizer.step()
            losses.add(loss.item())

    return train_with_early_stopping(model, config.epochs, config.patience, run_epoch, validate, log, f'hr@{NBO_TOP_K}')


def save_nbo(path: str, model: NboModel) -> None:
    save_checkpoint(path, ModelKind.NBO.value, model.hyperparams(), model.state_dict(), extras=model.extras())


def load_nbo(path: str) -> NboModel:
    checkpoint = load_checkpoint(path, expected_kind=ModelKind.NBO.value)
    model_args, config = restore_config(checkpoint, NboConfig, ['schema'])
    schema = ContractSchema.from_json(model_args['schema'])
    extras = checkpoint.extras
    require_keys(extras, ('vocabularies', 'numerical_mean', 'numerical_std'), 'extras')
    vocabularies = {name: Vocabulary(tokens) for name, tokens in extras['vocabularies'].items()}
    numeric_stats = NumericStats(np.array(extras['numerical_mean'], dtype=np.float64), np.array(extras['numerical_std'], dtype=np.float64))
    model = NboModel(schema, vocabularies, numeric_stats, config)
    model.load_state_dict(checkpoint.params)
    return model.eval()
