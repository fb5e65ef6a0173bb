"""
This module defines the reference auction rankers: Random, top-Popular, and the planted-affinity
oracle for synthetic data.

top-Popular counts, per vehicle, its training purchases and every bid placed on it. Held-out
purchases are never counted. Auctioned vehicles are unique, so purchase counts alone are 0 or 1;
the bid count is what separates popular vehicles.
"""

# stdlib imports
from collections import Counter
import logging
from typing import Dict, List, Sequence

# 3rd-party imports
import numpy as np

# project imports
from data.records import Dataset
from data.splits import LeaveOneOutSplit
from defs import ModelKind
from exceptions import ConfigError
from models.base import EvalCase, Ranker, rank_order


logger = logging.getLogger(__name__)


def random_ranker(candidates: Sequence[int], seed) -> List[int]:
    """Uniform random permutation of the candidates, fixed by the seed"""
    candidates = np.asarray(candidates)
    return [int(c) for c in candidates[np.random.default_rng(seed).permutation(len(candidates))]]


class RandomRanker(Ranker):
    KIND = ModelKind.RANDOM

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def score_case(self, case: EvalCase, dataset: Dataset) -> np.ndarray:
        order = np.random.default_rng([self.seed, case.case_index]).permutation(len(case.candidate_ids))
        scores = np.empty(len(order), dtype=np.float64)
        scores[order] = np.arange(len(order), 0, -1)
        return scores


class PopularityIndex:
    """Interaction counts per vehicle id, built without the held-out purchases"""
    def __init__(self, counts: Dict[int, int]) -> None:
        self.counts = dict(counts)

    @classmethod
    def from_split(cls, split: LeaveOneOutSplit) -> "PopularityIndex":
        counts = Counter(i.vehicle_id for i in split.popularity_interactions)
        logger.info('Popularity index over %d vehicles', len(counts))
        return cls(counts)

    def count(self, vehicle_id: int) -> int:
        return self.counts.get(int(vehicle_id), 0)

    def counts_of(self, vehicle_ids: Sequence[int]) -> np.ndarray:
        return np.array([self.count(v) for v in vehicle_ids], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.counts)


def popularity_ranker(index: PopularityIndex, candidates: Sequence[int]) -> List[int]:
    candidates = np.asarray(candidates)
    return [int(c) for c in candidates[rank_order(index.counts_of(candidates), candidates)]]


class PopularityRanker(Ranker):
    KIND = ModelKind.TOP_POPULAR

    def __init__(self, index: PopularityIndex) -> None:
        self.index = index

    def score_case(self, case: EvalCase, dataset: Dataset) -> np.ndarray:
        return self.index.counts_of(case.candidate_ids)


class AffinityOracleRanker(Ranker):
    """Scores candidates with the planted u^T v of a generated dataset"""
    def score_case(self, case: EvalCase, dataset: Dataset) -> np.ndarray:
        if dataset.latents is None:
            raise ConfigError('the affinity oracle needs a generated dataset with planted latents')
        dealer = dataset.latents.dealer[dataset.dealer_row(case.dealer_id)]
        vehicles = dataset.latents.vehicle[dataset.vehicle_rows(case.candidate_ids)]
        return vehicles @ dealer

    @property
    def name(self) -> str:
        return 'affinity-oracle'
