"""
This module defines the heuristic next-best-offer baselines:

    * Random:                 a random ordering of the classes per contract
    * Repeat + top-Popular:   the previous vehicle class first, then the most popular classes
    * Nearest Neighbours:     class votes of the k closest training contracts

All of them rank every class, ties by ascending class id.
"""

# stdlib imports
import logging
from typing import List, Sequence

# 3rd-party imports
import numpy as np

# project imports
from data.contracts import ContractRecord, ContractSchema
from defs import NBO_TOP_K, ModelKind
from exceptions import ArgumentError
from models.base import ClassRanker, rank_order
from models.nbo import NumericStats, build_vocabularies


logger = logging.getLogger(__name__)

DEFAULT_NEIGHBORS = 25


def class_popularity_counts(records: Sequence[ContractRecord], n_classes: int) -> np.ndarray:
    return np.bincount([r.target_class for r in records], minlength=n_classes).astype(np.float64)


def repeat_top_pop_ranker(record: ContractRecord, popularity: np.ndarray, k: int = NBO_TOP_K) -> List[int]:
    """Previous class first, then the most popular other classes (ties by ascending id)"""
    classes = np.arange(len(popularity))
    popular = [int(c) for c in classes[rank_order(popularity, classes)] if c != record.previous_class]
    return ([record.previous_class] + popular)[:k]


class RepeatTopPopRanker(ClassRanker):
    KIND = ModelKind.REPEAT_TOP_POP

    def __init__(self, popularity: np.ndarray) -> None:
        self.popularity = np.asarray(popularity, dtype=np.float64)

    @classmethod
    def from_train(cls, train: Sequence[ContractRecord], n_classes: int) -> "RepeatTopPopRanker":
        return cls(class_popularity_counts(train, n_classes))

    def class_scores(self, records: Sequence[ContractRecord]) -> np.ndarray:
        n_classes = len(self.popularity)
        scores = np.zeros((len(records), n_classes))
        for row, record in enumerate(records):
            ordering = repeat_top_pop_ranker(record, self.popularity, k=n_classes)
            scores[row, ordering] = np.arange(n_classes, 0, -1)
        return scores


class RandomClassRanker(ClassRanker):
    KIND = ModelKind.RANDOM

    def __init__(self, n_classes: int, seed: int = 0) -> None:
        self.n_classes = n_classes
        self.seed = seed

    def class_scores(self, records: Sequence[ContractRecord]) -> np.ndarray:
        return np.stack([
            np.random.default_rng([self.seed, row]).random(self.n_classes) for row in range(len(records))
        ]) if records else np.zeros((0, self.n_classes))


class KnnRanker(ClassRanker):
    """
    Euclidean k-nearest-neighbour vote. Numericals are standardized with training statistics,
    categoricals (previous class included) are one-hot; values unseen in training share the
    unknown column. Equidistant neighbours keep training order.
    """
    KIND = ModelKind.KNN

    def __init__(self, train: Sequence[ContractRecord], schema: ContractSchema, k: int = DEFAULT_NEIGHBORS) -> None:
        if k < 1 or k > len(train):
            raise ArgumentError(f'k={k} neighbours requested from {len(train)} training contracts')
        self.k = k
        self.schema = schema
        self.vocabularies = build_vocabularies(train, schema)
        self.numeric_stats = NumericStats.fit(train, len(schema.numerical))
        self.train_points = self.points(train)
        self.train_classes = np.array([r.target_class for r in train], dtype=np.int64)

    def points(self, records: Sequence[ContractRecord]) -> np.ndarray:
        blocks = []
        for column, name in enumerate(self.schema.categorical):
            vocabulary = self.vocabularies[name]
            indices = [vocabulary.index(r.categorical[column]) for r in records]
            blocks.append(np.eye(len(vocabulary))[indices].reshape(len(records), len(vocabulary)))
        blocks.append(np.eye(self.schema.n_classes)[[r.previous_class for r in records]].reshape(len(records), self.schema.n_classes))
        numerical = np.array([r.numerical for r in records], dtype=np.float64).reshape(len(records), len(self.schema.numerical))
        blocks.append(self.numeric_stats.apply(numerical))
        return np.concatenate(blocks, axis=1)

    def neighbours(self, point: np.ndarray) -> np.ndarray:
        distances = np.sqrt(np.sum((self.train_points - point) ** 2, axis=1))
        return np.argsort(distances, kind='stable')[:self.k]

    def class_scores(self, records: Sequence[ContractRecord]) -> np.ndarray:
        points = self.points(records)
        scores = np.zeros((len(records), self.schema.n_classes))
        for row, point in enumerate(points):
            scores[row] = np.bincount(self.train_classes[self.neighbours(point)], minlength=self.schema.n_classes)
        return scores


def knn_ranker(record: ContractRecord, train: Sequence[ContractRecord], schema: ContractSchema, k: int = DEFAULT_NEIGHBORS) -> List[int]:
    """Top-5 classes by neighbour vote"""
    scores = KnnRanker(train, schema, k=k).class_scores([record])[0]
    classes = np.arange(schema.n_classes)
    return [int(c) for c in classes[rank_order(scores, classes)][:NBO_TOP_K]]
