"""
This module defines the auction data model: dealers, vehicles, the purchase/bid interactions
between them, and the Dataset that ties them together with a per-dealer chronological index.

A Dataset is immutable once built, so any number of readers can share it.
"""

# stdlib imports
from bisect import bisect_left
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

# 3rd-party imports
import numpy as np

# project imports
from defs import Relation
from exceptions import IngestionError, UnknownDealerError


class Interaction(NamedTuple):
    dealer_id: int
    vehicle_id: int
    timestamp: int
    relation: Relation


class SyntheticLatents(NamedTuple):
    """The planted truth behind a generated dataset, kept for oracle rankers"""
    dealer: np.ndarray
    vehicle: np.ndarray
    affinity_scale: float


def _as_matrix(features, rows: int) -> np.ndarray:
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        features = features.reshape(rows, -1) if rows else features.reshape(0, 0)
    if features.shape[0] != rows:
        raise IngestionError(f'{features.shape[0]} feature rows for {rows} ids')
    return features


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


class Dataset:
    """
    Dealers, vehicles, and their interactions.

    Dealer and vehicle records are stored column-wise: row i of `dealer_features` describes
    `dealer_ids[i]`, and the same holds for vehicles.

    Invariants checked on construction:
        * ids are unique and feature widths are uniform and finite
        * every interaction resolves against the dealer and vehicle tables
        * timestamps are non-negative
        * each vehicle is purchased at most once (auction items are unique)

    Per-dealer histories are sorted by (timestamp, input order).
    """
    def __init__(
        self,
        dealer_ids: Sequence[int],
        dealer_features: np.ndarray,
        vehicle_ids: Sequence[int],
        vehicle_features: np.ndarray,
        interactions: Iterable[Interaction],
        latents: Optional[SyntheticLatents] = None,
    ) -> None:
        self.dealer_ids = _frozen(np.asarray(dealer_ids, dtype=np.int64))
        self.vehicle_ids = _frozen(np.asarray(vehicle_ids, dtype=np.int64))
        self.dealer_features = _frozen(_as_matrix(dealer_features, len(self.dealer_ids)))
        self.vehicle_features = _frozen(_as_matrix(vehicle_features, len(self.vehicle_ids)))
        self.interactions: Tuple[Interaction, ...] = tuple(
            Interaction(int(i.dealer_id), int(i.vehicle_id), int(i.timestamp), Relation(i.relation))
            for i in interactions
        )
        self.latents = latents

        self._dealer_rows: Dict[int, int] = {int(d): row for row, d in enumerate(self.dealer_ids)}
        self._vehicle_rows: Dict[int, int] = {int(v): row for row, v in enumerate(self.vehicle_ids)}
        self._validate()

        by_dealer: Dict[int, List[Interaction]] = {int(d): [] for d in self.dealer_ids}
        for interaction in self.interactions:
            by_dealer[interaction.dealer_id].append(interaction)
        # list.sort is stable, so equal timestamps keep their input order
        self._histories: Dict[int, Tuple[Interaction, ...]] = {
            dealer: tuple(sorted(history, key=lambda i: i.timestamp))
            for dealer, history in by_dealer.items()
        }
        self._history_times: Dict[int, List[int]] = {
            dealer: [i.timestamp for i in history] for dealer, history in self._histories.items()
        }

    def _validate(self) -> None:
        if len(self._dealer_rows) != len(self.dealer_ids):
            raise IngestionError('duplicate dealer ids')
        if len(self._vehicle_rows) != len(self.vehicle_ids):
            raise IngestionError('duplicate vehicle ids')
        if not np.all(np.isfinite(self.dealer_features)):
            raise IngestionError('dealer features contain non-finite values')
        if not np.all(np.isfinite(self.vehicle_features)):
            raise IngestionError('vehicle features contain non-finite values')

        purchased = set()
        for idx, interaction in enumerate(self.interactions):
            if interaction.dealer_id not in self._dealer_rows:
                raise IngestionError(f'interaction {idx} references unknown dealer {interaction.dealer_id}')
            if interaction.vehicle_id not in self._vehicle_rows:
                raise IngestionError(f'interaction {idx} references unknown vehicle {interaction.vehicle_id}')
            if interaction.timestamp < 0:
                raise IngestionError(f'interaction {idx} has negative timestamp {interaction.timestamp}')
            if interaction.relation == Relation.PURCHASE:
                if interaction.vehicle_id in purchased:
                    raise IngestionError(f'interaction {idx} purchases vehicle {interaction.vehicle_id} a second time')
                purchased.add(interaction.vehicle_id)

    @property
    def n_dealers(self) -> int:
        return len(self.dealer_ids)

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicle_ids)

    @property
    def dealer_feature_dim(self) -> int:
        return self.dealer_features.shape[1]

    @property
    def vehicle_feature_dim(self) -> int:
        return self.vehicle_features.shape[1]

    @property
    def purchase_count(self) -> int:
        return sum(1 for i in self.interactions if i.relation == Relation.PURCHASE)

    @property
    def bid_count(self) -> int:
        return sum(1 for i in self.interactions if i.relation == Relation.BID)

    def has_dealer(self, dealer_id: int) -> bool:
        return int(dealer_id) in self._dealer_rows

    def dealer_row(self, dealer_id: int) -> int:
        try:
            return self._dealer_rows[int(dealer_id)]
        except KeyError:
            raise UnknownDealerError(f'unknown dealer {dealer_id}') from None

    def vehicle_row(self, vehicle_id: int) -> int:
        try:
            return self._vehicle_rows[int(vehicle_id)]
        except KeyError:
            raise IngestionError(f'unknown vehicle {vehicle_id}') from None

    def vehicle_rows(self, vehicle_ids: Iterable[int]) -> np.ndarray:
        return np.array([self.vehicle_row(v) for v in vehicle_ids], dtype=np.int64)

    def features_of(self, vehicle_ids: Iterable[int]) -> np.ndarray:
        return self.vehicle_features[self.vehicle_rows(vehicle_ids)]

    def history(self, dealer_id: int) -> Tuple[Interaction, ...]:
        """All of a dealer's interactions, oldest first"""
        self.dealer_row(dealer_id)
        return self._histories[int(dealer_id)]

    def history_before(self, dealer_id: int, timestamp: int) -> Tuple[Interaction, ...]:
        """The dealer's interactions strictly before `timestamp`"""
        history = self.history(dealer_id)
        return history[:bisect_left(self._history_times[int(dealer_id)], timestamp)]

    def interacted_vehicle_ids(self, dealer_id: int) -> FrozenSet[int]:
        return frozenset(i.vehicle_id for i in self.history(dealer_id))

    def __repr__(self) -> str:
        return (
            f'Dataset(Dealers={self.n_dealers}, Vehicles={self.n_vehicles}, '
            f'Purchases={self.purchase_count}, Bids={self.bid_count})'
        )
