"""
This module defines the base classes shared by every ranker, plus the ranking and training-loop
helpers they all use.

Two kinds of rankers exist:
    * Ranker scores a candidate pool of vehicles for each auction evaluation case
    * ClassRanker scores every vehicle class for each contract

Ranking is always by descending score with ties broken by ascending id.
"""

# stdlib imports
import logging
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

# 3rd-party imports
import numpy as np

# project imports
from data.records import Dataset, Interaction
from defs import INFERENCE_BLOCK_ROWS, ModelKind
from exceptions import ArgumentError
from nn.layers import Module
from stats import TrackerStat, TrainingLog


logger = logging.getLogger(__name__)


class EvalCase(NamedTuple):
    """One held-out purchase: the positive is always candidate_ids[0]"""
    case_index: int
    dealer_id: int
    timestamp: int
    history: Tuple[Interaction, ...]
    candidate_ids: np.ndarray


def rank_order(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Positions sorted by descending score, ties by ascending id"""
    return np.lexsort((np.asarray(ids), -np.asarray(scores, dtype=np.float64)))


def top_k(ids: np.ndarray, scores: np.ndarray, k: int) -> List[Tuple[int, float]]:
    ids = np.asarray(ids)
    if k < 1 or k > len(ids):
        raise ArgumentError(f'K must be between 1 and the number of candidates ({len(ids)}), got {k}')
    order = rank_order(scores, ids)[:k]
    return [(int(ids[idx]), float(scores[idx])) for idx in order]


def run_in_blocks(forward: Callable[[np.ndarray], np.ndarray], inputs: np.ndarray, block_rows: int = INFERENCE_BLOCK_ROWS) -> np.ndarray:
    """
    Apply `forward` to fixed-size row blocks, zero-padding the last one. Each row then sees the
    same kernel shapes no matter how many rows were requested, so its output is bit-identical
    whether it is scored alone or with others.
    """
    inputs = np.asarray(inputs)
    outputs = []
    for start in range(0, len(inputs), block_rows):
        block = inputs[start:start + block_rows]
        rows = len(block)
        if rows < block_rows:
            padding = np.zeros((block_rows - rows,) + block.shape[1:], dtype=block.dtype)
            block = np.concatenate([block, padding], axis=0)
        outputs.append(forward(block)[:rows])
    if not outputs:
        return np.zeros((0,), dtype=np.float32)
    return np.concatenate(outputs, axis=0)


class Ranker:
    """
    Base class for auction rankers. Subclasses override `score_case`, or `score_cases` when they
    can score many cases at once.
    """
    KIND: ModelKind = None

    def score_case(self, case: EvalCase, dataset: Dataset) -> np.ndarray:
        raise NotImplementedError(
            'Each Ranker subclass must override score_case or score_cases.'
        )

    def score_cases(self, cases: Sequence[EvalCase], dataset: Dataset) -> List[np.ndarray]:
        return [self.score_case(case, dataset) for case in cases]

    @property
    def name(self) -> str:
        return self.KIND.value if self.KIND is not None else self.__class__.__name__


class ClassRanker:
    """Base class for next-best-offer rankers: one score per class for every contract"""
    KIND: ModelKind = None

    def class_scores(self, records: Sequence) -> np.ndarray:
        raise NotImplementedError(
            'Each ClassRanker subclass must override class_scores.'
        )

    @property
    def name(self) -> str:
        return self.KIND.value if self.KIND is not None else self.__class__.__name__


def train_with_early_stopping(
    model: Module,
    epochs: int,
    patience: int,
    run_epoch: Callable[[int, TrackerStat], None],
    validate: Callable[[], Optional[Dict[str, float]]],
    log: TrainingLog,
    selection_metric: str,
) -> Module:
    """
    The loop every trainable model shares. Epoch 0 records validation of the untrained model.
    After each epoch the model is validated; the parameters of the best epoch (by
    `selection_metric`) are restored at the end. `patience` epochs without improvement stop
    training early, 0 disables early stopping. Without validation cases the last epoch wins.
    """
    model.eval()
    metrics = validate()
    log.record(0, None, metrics)
    best_score = metrics[selection_metric] if metrics else None
    best_state = model.state_dict()
    best_epoch = 0
    stale = 0

    for epoch in range(1, epochs + 1):
        losses = TrackerStat()
        model.train()
        run_epoch(epoch, losses)
        model.eval()
        metrics = validate()
        log.record(epoch, losses.avg, metrics, losses=losses)

        if metrics is None:
            best_state, best_epoch = model.state_dict(), epoch
            continue
        if best_score is None or metrics[selection_metric] > best_score:
            best_score, best_state, best_epoch, stale = metrics[selection_metric], model.state_dict(), epoch, 0
        else:
            stale += 1
            if patience and stale >= patience:
                logger.info('Stopping early after epoch %d, no improvement for %d epochs', epoch, stale)
                break

    model.load_state_dict(best_state)
    model.eval()
    logger.info('Keeping epoch %d (%s=%s)', best_epoch, selection_metric, best_score)
    return model
