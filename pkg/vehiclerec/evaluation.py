"""
This module defines the ranking metrics and the evaluation protocols.

Auction protocol: each held-out purchase becomes one case whose candidate pool is the purchased
vehicle plus N negatives drawn uniformly without replacement from the vehicles that dealer never
interacted with (train, validation and test included). Each case draws its negatives from its own
generator seeded with (seed, case index), so results don't depend on evaluation order.

Next-best-offer protocol: the true class is ranked among all classes, no sampling.

Both protocols use a single positive per case, so IDCG is 1:
    HR@K   = mean 1[rank <= K]
    NDCG@K = mean 1[rank <= K] / log2(rank + 1)
"""

# stdlib imports
from dataclasses import asdict, dataclass, field
import json
import logging
import math
from typing import Any, Dict, List, Optional, Sequence

# 3rd-party imports
import numpy as np

# project imports
from data.records import Dataset
from data.splits import LeaveOneOutSplit
from defs import AUCTION_TOP_K, DEFAULT_EVAL_NEGATIVES, NBO_TOP_K
from exceptions import ConfigError, ProtocolError
from models.base import ClassRanker, EvalCase, Ranker


logger = logging.getLogger(__name__)


def rank_of_positive(scores: np.ndarray, positive_index: int, ids: np.ndarray) -> int:
    """1-based rank of the positive after a descending sort with ties by ascending id"""
    scores = np.asarray(scores)
    ids = np.asarray(ids)
    positive_score = scores[positive_index]
    positive_id = ids[positive_index]
    ahead = np.count_nonzero(scores > positive_score)
    tied_ahead = np.count_nonzero((scores == positive_score) & (ids < positive_id))
    return int(1 + ahead + tied_ahead)


def _check_ranks(ranks: Sequence[int]) -> np.ndarray:
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ProtocolError('cannot compute ranking metrics over zero cases')
    return ranks


def hr_at_k(ranks: Sequence[int], k: int) -> float:
    ranks = _check_ranks(ranks)
    return float(np.mean(ranks <= k))


def ndcg_at_k(ranks: Sequence[int], k: int) -> float:
    ranks = _check_ranks(ranks)
    gains = np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)
    return float(np.mean(gains))


def ranking_metrics(ranks: Sequence[int], ks: Sequence[int]) -> Dict[str, float]:
    metrics = {}
    for k in ks:
        metrics[f'hr@{k}'] = hr_at_k(ranks, k)
        metrics[f'ndcg@{k}'] = ndcg_at_k(ranks, k)
    return metrics


@dataclass
class EvalProtocol:
    k: List[int] = field(default_factory=lambda: [AUCTION_TOP_K])
    negatives: int = DEFAULT_EVAL_NEGATIVES
    seed: int = 0

    def __post_init__(self) -> None:
        self.k = [int(k) for k in (self.k if isinstance(self.k, (list, tuple)) else [self.k])]
        if not self.k:
            raise ConfigError('at least one K is required')
        if self.negatives < 1:
            raise ConfigError(f'negatives must be >= 1, got {self.negatives}')
        for k in self.k:
            if not 1 <= k <= self.negatives + 1:
                raise ConfigError(f'K={k} must be between 1 and the pool size {self.negatives + 1}')

    def to_json(self) -> Dict[str, Any]:
        return {'k': list(self.k), 'negatives': self.negatives, 'seed': self.seed}


@dataclass
class EvalReport:
    model: str
    protocol: Dict[str, Any]
    metrics: Dict[str, float]
    dataset: Dict[str, int]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def __str__(self) -> str:
        metrics = ', '.join(f'{name}={value:.4f}' for name, value in self.metrics.items())
        return f'EvalReport[ {self.model} | {metrics} ]'


def build_cases(split: LeaveOneOutSplit, dataset: Dataset, protocol: EvalProtocol, which: str = 'test') -> List[EvalCase]:
    cases = []
    for case_index, target in enumerate(split.held_out(which)):
        excluded = np.array(sorted(dataset.interacted_vehicle_ids(target.dealer_id)), dtype=np.int64)
        eligible = dataset.vehicle_ids[~np.isin(dataset.vehicle_ids, excluded)]
        if len(eligible) < protocol.negatives:
            raise ProtocolError(
                f'dealer {target.dealer_id} has only {len(eligible)} never-interacted vehicles, '
                f'{protocol.negatives} negatives requested'
            )

        rng = np.random.default_rng([protocol.seed, case_index])
        negatives = rng.choice(eligible, size=protocol.negatives, replace=False)
        cases.append(EvalCase(
            case_index=case_index,
            dealer_id=target.dealer_id,
            timestamp=target.timestamp,
            history=dataset.history_before(target.dealer_id, target.timestamp),
            candidate_ids=np.concatenate([[target.vehicle_id], negatives]).astype(np.int64),
        ))
    return cases


def case_ranks(ranker: Ranker, cases: Sequence[EvalCase], dataset: Dataset) -> List[int]:
    scores = ranker.score_cases(cases, dataset)
    return [rank_of_positive(case_scores, 0, case.candidate_ids) for case, case_scores in zip(cases, scores)]


def auction_fingerprint(dataset: Dataset) -> Dict[str, int]:
    return {
        'users': dataset.n_dealers,
        'items': dataset.n_vehicles,
        'purchases': dataset.purchase_count,
        'bids': dataset.bid_count,
    }


def evaluate(
    ranker: Ranker,
    split: LeaveOneOutSplit,
    protocol: EvalProtocol,
    dataset: Dataset,
    which: str = 'test',
) -> EvalReport:
    cases = build_cases(split, dataset, protocol, which=which)
    if not cases:
        raise ProtocolError(f'the {which} split has no evaluation cases (no dealer has 3 or more purchases)')

    ranks = case_ranks(ranker, cases, dataset)
    report = EvalReport(
        model=ranker.name,
        protocol=protocol.to_json(),
        metrics=ranking_metrics(ranks, protocol.k),
        dataset=auction_fingerprint(dataset),
    )
    logger.info('%s on %d %s cases', report, len(cases), which)
    return report


def evaluate_nbo(
    ranker: ClassRanker,
    records: Sequence,
    n_classes: int,
    k: Sequence[int] = (NBO_TOP_K,),
    seed: int = 0,
    total_contracts: Optional[int] = None,
) -> EvalReport:
    if not records:
        raise ProtocolError('cannot evaluate next-best-offer rankers on an empty split')
    for cutoff in k:
        if not 1 <= cutoff <= n_classes:
            raise ConfigError(f'K={cutoff} must be between 1 and the class count {n_classes}')

    scores = ranker.class_scores(records)
    class_ids = np.arange(n_classes)
    ranks = [rank_of_positive(scores[idx], record.target_class, class_ids) for idx, record in enumerate(records)]

    report = EvalReport(
        model=ranker.name,
        protocol={'k': list(k), 'negatives': 0, 'seed': seed},
        metrics=ranking_metrics(ranks, k),
        dataset={
            'contracts': total_contracts if total_contracts is not None else len(records),
            'classes': n_classes,
            'test_contracts': len(records),
        },
    )
    logger.info('%s on %d contracts', report, len(records))
    return report


def expected_random_hr(k: int, pool_size: int) -> float:
    """HR@K of a uniformly random ranking with one positive: K / pool size"""
    return min(k, pool_size) / pool_size


def hr_standard_error(k: int, pool_size: int, cases: int) -> float:
    p = expected_random_hr(k, pool_size)
    return math.sqrt(p * (1 - p) / cases)
