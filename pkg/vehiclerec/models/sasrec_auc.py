"""
This module defines the attribute-aware multi-relational sequential recommender.

A dealer's history is a chronological list of (vehicle, relation) pairs. Each position is embedded
as
    x_t = W_F^T features_t + P_t + R_relation_t
and passed through L causal self-attention blocks, so the hidden state at position t only sees
positions <= t. Vehicles are unique per auction, so there is no item id table: candidates are
scored through the same feature projection,
    score_c = h^T (W_F^T features_c)

Training predicts the next interaction at every position. Purchase targets and bid targets each
get a binary cross-entropy against uniformly sampled negative vehicles, and the bid term is
weighted by `bid_loss_weight`:
    loss = L_purchase + bid_loss_weight * L_bid

Histories are left-padded to `max_seq_len`; longer histories keep their most recent positions at
inference and are cut into consecutive windows for training.
"""

# stdlib imports
from dataclasses import asdict, dataclass
import logging
from typing import List, NamedTuple, Optional, Sequence, Tuple

# 3rd-party imports
import numpy as np

# project imports
from data.records import Dataset, Interaction
from data.splits import LeaveOneOutSplit
from defs import AUCTION_TOP_K, NUM_RELATIONS, ModelKind, Relation
from evaluation import EvalProtocol, build_cases, case_ranks, ranking_metrics
from exceptions import ConfigError, DimensionError, NumericalError
from models.base import EvalCase, Ranker, top_k, run_in_blocks, train_with_early_stopping
from nn import ops
from nn.checkpoint import load_checkpoint, restore_config, save_checkpoint
from nn.layers import Dropout, Embedding, LayerNorm, Linear, Module, TransformerBlock
from nn.optim import Adam
from nn.tensor import Tensor, no_grad
from stats import TrackerStat, TrainingLog


logger = logging.getLogger(__name__)


@dataclass
class SasrecConfig:
    embed_dim: int = 64
    blocks: int = 2
    heads: int = 2
    max_seq_len: int = 50
    dropout: float = 0.2
    bid_loss_weight: float = 0.5
    negatives_per_position: int = 1
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 128
    seed: int = 0
    use_bid_inputs: bool = True  # False drops bids from the sequences entirely
    patience: int = 3
    validation_negatives: int = 103

    def __post_init__(self) -> None:
        if self.embed_dim < 1 or self.heads < 1 or self.embed_dim % self.heads != 0:
            raise ConfigError(f'embed_dim {self.embed_dim} must be divisible by heads {self.heads}')
        if self.blocks < 0:
            raise ConfigError(f'blocks must be >= 0, got {self.blocks}')
        if self.max_seq_len < 1:
            raise ConfigError(f'max_seq_len must be >= 1, got {self.max_seq_len}')
        if not 0 <= self.dropout < 1:
            raise ConfigError(f'dropout must be in [0, 1), got {self.dropout}')
        if self.bid_loss_weight < 0:
            raise ConfigError(f'bid_loss_weight must be >= 0, got {self.bid_loss_weight}')
        if self.negatives_per_position < 1:
            raise ConfigError(f'negatives_per_position must be >= 1, got {self.negatives_per_position}')
        if self.learning_rate <= 0:
            raise ConfigError(f'learning_rate must be positive, got {self.learning_rate}')
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 0:
            raise ConfigError('epochs and patience must be >= 0 and batch_size >= 1')


class SasrecModel(Module):
    def __init__(self, item_features: int, config: SasrecConfig) -> None:
        super().__init__()
        self.config = config
        self.item_features = item_features

        rng = np.random.default_rng(config.seed)
        dropout_rng = np.random.Generator(np.random.Philox(config.seed))
        d, n = config.embed_dim, config.max_seq_len

        self.feature_projection = Linear(item_features, d, rng, bias=False)
        self.positions = Embedding(n, d, rng)
        self.relations = Embedding(NUM_RELATIONS, d, rng)
        self.input_dropout = Dropout(config.dropout, dropout_rng)
        self.blocks = [TransformerBlock(d, config.heads, config.dropout, rng, dropout_rng) for _ in range(config.blocks)]
        self.final_norm = LayerNorm(d)

    def project(self, features: np.ndarray) -> Tensor:
        """W_F^T features for any [... x F] feature array"""
        features = np.asarray(features)
        if features.shape[-1] != self.item_features:
            raise DimensionError(f'vehicle features have width {features.shape[-1]}, the model expects {self.item_features}')
        flat = self.feature_projection(Tensor(features.reshape(-1, self.item_features)))
        return ops.reshape(flat, features.shape[:-1] + (self.config.embed_dim,))

    def forward(self, features: np.ndarray, relations: np.ndarray, valid: np.ndarray) -> Tensor:
        """
        features [B x n x F], relations [B x n], valid [B x n] -> hidden states [B x n x d].
        Padding positions come out as exact zeros.
        """
        length = features.shape[1]
        if length > self.config.max_seq_len:
            raise DimensionError(f'sequence length {length} exceeds max_seq_len {self.config.max_seq_len}')
        mask = np.asarray(valid, dtype=bool)
        keep = mask.astype(features.dtype)[..., None]

        x = ops.add(self.project(features), self.positions(np.arange(length)))
        x = ops.add(x, self.relations(np.asarray(relations, dtype=np.int64)))
        x = self.input_dropout(ops.mul(x, keep))
        for block in self.blocks:
            x = block(x, key_valid=mask)
        return ops.mul(self.final_norm(x), keep)

    def hyperparams(self) -> dict:
        return {**asdict(self.config), 'item_features': self.item_features}


class SequenceInputs(NamedTuple):
    features: np.ndarray   # [B x n x F]
    relations: np.ndarray  # [B x n]
    valid: np.ndarray      # [B x n]


def sequence_filter(history: Sequence[Interaction], use_bid_inputs: bool) -> List[Interaction]:
    return list(history) if use_bid_inputs else [i for i in history if i.relation == Relation.PURCHASE]


def pad_history(
    rows: Sequence[int],
    relations: Sequence[int],
    vehicle_features: np.ndarray,
    max_seq_len: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Keep the most recent `max_seq_len` entries, left-padded"""
    rows = list(rows)[-max_seq_len:]
    relations = list(relations)[-max_seq_len:]
    features = np.zeros((max_seq_len, vehicle_features.shape[1]), dtype=vehicle_features.dtype)
    relation_ids = np.zeros(max_seq_len, dtype=np.int64)
    valid = np.zeros(max_seq_len, dtype=bool)
    if rows:
        features[-len(rows):] = vehicle_features[np.asarray(rows, dtype=np.int64)]
        relation_ids[-len(rows):] = relations
        valid[-len(rows):] = True
    return features, relation_ids, valid


def encode_history(
    model: SasrecModel,
    features: np.ndarray,
    relations: Sequence[int],
) -> np.ndarray:
    """
    Hidden states [n x d] for one history given as a [m x F] feature matrix and m relations,
    oldest first. Histories longer than max_seq_len keep their most recent entries.
    """
    relations = [int(r) for r in relations]
    width = model.item_features
    if relations:
        features = np.asarray(features, dtype=np.float32)
        if features.shape != (len(relations), width):
            raise DimensionError(f'history features have shape {features.shape}, expected [{len(relations)} x {width}]')
    else:
        features = np.zeros((0, width), dtype=np.float32)

    padded, relation_ids, valid = pad_history(range(len(relations)), relations, features, model.config.max_seq_len)
    model.eval()
    with no_grad():
        hidden = model(padded[None], relation_ids[None], valid[None])
    return hidden.data[0]


def score_candidates(model: SasrecModel, query: np.ndarray, candidate_features: np.ndarray) -> np.ndarray:
    """score_c = query^T (W_F^T features_c) for every candidate row"""
    candidate_features = np.asarray(candidate_features, dtype=np.float32)
    if candidate_features.ndim != 2 or candidate_features.shape[1] != model.item_features:
        raise DimensionError(f'candidate features have shape {candidate_features.shape}, expected [C x {model.item_features}]')
    if len(candidate_features) == 0:
        raise DimensionError('score_candidates needs at least one candidate')
    with no_grad():
        projected = model.project(candidate_features).data
    return projected @ np.asarray(query, dtype=projected.dtype)


def recommend(
    model: SasrecModel,
    history_features: np.ndarray,
    history_relations: Sequence[int],
    candidate_ids: Sequence[int],
    candidate_features: np.ndarray,
    k: int = AUCTION_TOP_K,
) -> List[Tuple[int, float]]:
    """Top-K (vehicle id, score) pairs, descending score, ties by ascending id"""
    hidden = encode_history(model, history_features, history_relations)
    scores = score_candidates(model, hidden[-1], candidate_features)
    return top_k(np.asarray(candidate_ids), scores, k)


class SasrecRanker(Ranker):
    KIND = ModelKind.SASREC_AUC

    def __init__(self, model: SasrecModel) -> None:
        self.model = model

    def history_inputs(self, histories: Sequence[Sequence[Interaction]], dataset: Dataset) -> SequenceInputs:
        n = self.model.config.max_seq_len
        padded = []
        for history in histories:
            history = sequence_filter(history, self.model.config.use_bid_inputs)
            padded.append(pad_history(
                dataset.vehicle_rows(i.vehicle_id for i in history),
                [int(i.relation) for i in history],
                dataset.vehicle_features,
                n,
            ))
        if not padded:
            return SequenceInputs(
                np.zeros((0, n, dataset.vehicle_feature_dim), np.float32), np.zeros((0, n), np.int64), np.zeros((0, n), bool),
            )
        features, relations, valid = (np.stack(parts) for parts in zip(*padded))
        return SequenceInputs(features, relations, valid)

    def queries(self, histories: Sequence[Sequence[Interaction]], dataset: Dataset) -> np.ndarray:
        """Hidden state at the most recent position of each history, [len x d]"""
        inputs = self.history_inputs(histories, dataset)
        n, width = self.model.config.max_seq_len, self.model.item_features
        # one packed array so every block is padded the same way
        packed = np.concatenate([
            inputs.features.reshape(len(inputs.valid), -1),
            inputs.relations.astype(inputs.features.dtype),
            inputs.valid.astype(inputs.features.dtype),
        ], axis=1)

        def forward(block: np.ndarray) -> np.ndarray:
            features = block[:, :n * width].reshape(-1, n, width)
            relations = block[:, n * width:n * width + n].astype(np.int64)
            valid = block[:, n * width + n:] > 0
            return self.model(features, relations, valid).data[:, -1, :]

        self.model.eval()
        with no_grad():
            return run_in_blocks(forward, packed)

    def score_cases(self, cases: Sequence[EvalCase], dataset: Dataset) -> List[np.ndarray]:
        queries = self.queries([case.history for case in cases], dataset)
        return [
            score_candidates(self.model, query, dataset.features_of(case.candidate_ids))
            for query, case in zip(queries, cases)
        ]


class TrainingWindows(NamedTuple):
    """Per-window vehicle rows (-1 = padding) and relations for inputs and next-step targets"""
    dealer_ids: np.ndarray
    input_rows: np.ndarray
    input_relations: np.ndarray
    target_rows: np.ndarray
    target_relations: np.ndarray


def build_training_windows(dataset: Dataset, split: LeaveOneOutSplit, config: SasrecConfig) -> TrainingWindows:
    """
    Cut each training sequence into consecutive windows of up to n transitions, counted back from
    the most recent one, so every transition is used exactly once.
    """
    n = config.max_seq_len
    dealers, inputs, input_relations, targets, target_relations = [], [], [], [], []
    for dealer_id in sorted(split.train_sequences):
        sequence = sequence_filter(split.train_sequences[dealer_id], config.use_bid_inputs)
        rows = dataset.vehicle_rows(i.vehicle_id for i in sequence)
        relations = np.array([int(i.relation) for i in sequence], dtype=np.int64)

        end = len(sequence) - 1
        while end > 0:
            start = max(0, end - n)
            length = end - start
            window_rows = np.full((2, n), -1, dtype=np.int64)
            window_relations = np.zeros((2, n), dtype=np.int64)
            window_rows[0, -length:] = rows[start:end]
            window_rows[1, -length:] = rows[start + 1:end + 1]
            window_relations[0, -length:] = relations[start:end]
            window_relations[1, -length:] = relations[start + 1:end + 1]

            dealers.append(dealer_id)
            inputs.append(window_rows[0])
            targets.append(window_rows[1])
            input_relations.append(window_relations[0])
            target_relations.append(window_relations[1])
            end = start

    if not dealers:
        empty = np.zeros((0, n), dtype=np.int64)
        return TrainingWindows(np.zeros(0, dtype=np.int64), empty, empty, empty, empty)
    return TrainingWindows(np.array(dealers), np.stack(inputs), np.stack(input_relations), np.stack(targets), np.stack(target_relations))


class SasrecBatch(NamedTuple):
    dealer_ids: np.ndarray
    inputs: SequenceInputs
    target_rows: np.ndarray
    target_relations: np.ndarray
    target_valid: np.ndarray


def make_batch(windows: TrainingWindows, indices: np.ndarray, vehicle_features: np.ndarray) -> SasrecBatch:
    input_rows = windows.input_rows[indices]
    valid = input_rows >= 0
    features = vehicle_features[np.maximum(input_rows, 0)] * valid[..., None].astype(vehicle_features.dtype)
    target_rows = windows.target_rows[indices]
    return SasrecBatch(
        dealer_ids=windows.dealer_ids[indices],
        inputs=SequenceInputs(features, windows.input_relations[indices], valid),
        target_rows=target_rows,
        target_relations=windows.target_relations[indices],
        target_valid=target_rows >= 0,
    )


def sample_negative_rows(rng: np.random.Generator, target_rows: np.ndarray, n_vehicles: int, count: int) -> np.ndarray:
    """Uniform vehicle rows other than the target, [B x n x count]"""
    if n_vehicles < 2:
        raise ConfigError('negative sampling needs at least 2 vehicles')
    offsets = rng.integers(1, n_vehicles, size=target_rows.shape + (count,))
    return (np.maximum(target_rows, 0)[..., None] + offsets) % n_vehicles


def position_weights(batch: SasrecBatch, bid_loss_weight: float) -> np.ndarray:
    """1/#purchase-targets on purchase positions, bid_loss_weight/#bid-targets on bid positions"""
    purchase = batch.target_valid & (batch.target_relations == Relation.PURCHASE)
    bid = batch.target_valid & (batch.target_relations == Relation.BID)
    weights = purchase / max(int(purchase.sum()), 1)
    weights = weights + bid_loss_weight * bid / max(int(bid.sum()), 1)
    return weights


def sasrec_loss(
    model: SasrecModel,
    batch: SasrecBatch,
    negative_rows: np.ndarray,
    vehicle_features: np.ndarray,
    bid_loss_weight: float,
) -> Tensor:
    hidden = model(batch.inputs.features, batch.inputs.relations, batch.inputs.valid)
    b, n, d = hidden.shape
    weights = position_weights(batch, bid_loss_weight)

    positives = model.project(vehicle_features[np.maximum(batch.target_rows, 0)])
    positive_scores = ops.sum(ops.mul(hidden, positives), axis=-1)
    negatives = model.project(vehicle_features[negative_rows])
    negative_scores = ops.sum(ops.mul(ops.reshape(hidden, (b, n, 1, d)), negatives), axis=-1)

    return ops.add(
        ops.bce_with_logits(positive_scores, np.ones((b, n)), weights),
        ops.bce_with_logits(negative_scores, np.zeros(negative_rows.shape), weights[..., None]),
    )


def training_step(
    model: SasrecModel,
    optimizer: Adam,
    batch: SasrecBatch,
    vehicle_features: np.ndarray,
    rng: np.random.Generator,
) -> float:
    config = model.config
    negative_rows = sample_negative_rows(rng, batch.target_rows, len(vehicle_features), config.negatives_per_position)
    try:
        loss = sasrec_loss(model, batch, negative_rows, vehicle_features, config.bid_loss_weight)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f'loss is {value}')
        loss.backward()
        optimizer.step()
    except NumericalError as exc:
        raise NumericalError(
            f'{exc} [batch of {len(batch.dealer_ids)} windows, dealers {batch.dealer_ids[:8].tolist()}, '
            f'{int(batch.target_valid.sum())} target positions]'
        ) from exc
    return value


def train_sasrec(
    dataset: Dataset,
    split: LeaveOneOutSplit,
    config: SasrecConfig,
    log: Optional[TrainingLog] = None,
) -> SasrecModel:
    """Train on the split's training sequences; returns the parameters of the best validation epoch"""
    windows = build_training_windows(dataset, split, config)
    if len(windows.dealer_ids) == 0:
        raise ConfigError('empty train split: no dealer has two or more training interactions')

    log = log if log is not None else TrainingLog()
    model = SasrecModel(dataset.vehicle_feature_dim, config)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    vehicle_features = dataset.vehicle_features
    logger.info('Training %s on %d windows', ModelKind.SASREC_AUC.value, len(windows.dealer_ids))

    validation_cases = []
    if split.validation:
        protocol = EvalProtocol(k=[AUCTION_TOP_K], negatives=config.validation_negatives, seed=config.seed)
        validation_cases = build_cases(split, dataset, protocol, which='validation')
    ranker = SasrecRanker(model)

    def validate():
        if not validation_cases:
            return None
        metrics = ranking_metrics(case_ranks(ranker, validation_cases, dataset), [AUCTION_TOP_K])
        for name, value in metrics.items():
            if not np.isfinite(value):
                raise NumericalError(f'validation {name} is {value}')
        return metrics

    def run_epoch(epoch: int, losses: TrackerStat) -> None:
        order = rng.permutation(len(windows.dealer_ids))
        for start in range(0, len(order), config.batch_size):
            batch = make_batch(windows, order[start:start + config.batch_size], vehicle_features)
            losses.add(training_step(model, optimizer, batch, vehicle_features, rng))

    return train_with_early_stopping(model, config.epochs, config.patience, run_epoch, validate, log, f'hr@{AUCTION_TOP_K}')


def save_sasrec(path: str, model: SasrecModel) -> None:
    save_checkpoint(path, ModelKind.SASREC_AUC.value, model.hyperparams(), model.state_dict())


def load_sasrec(path: str) -> SasrecModel:
    checkpoint = load_checkpoint(path, expected_kind=ModelKind.SASREC_AUC.value)
    model_args, config = restore_config(checkpoint, SasrecConfig, ['item_features'])
    model = SasrecModel(model_args['item_features'], config)
    model.load_state_dict(checkpoint.params)
    return model.eval()
