"""
This module defines the chronological leave-one-out split of a Dataset.

Per dealer with at least 3 purchases:
    * last purchase           -> test
    * second-to-last purchase -> validation
    * everything before the validation purchase (purchases and bids) -> train

Dealers with fewer purchases contribute all of their interactions to train and are not evaluated.
Only purchases are held out: every bid on the platform stays available as side information
(`LeaveOneOutSplit.bids`), since a bid is never an evaluation target.
Evaluation histories are read back from the Dataset with `history_before(target timestamp)`, so
every interaction strictly before the held-out purchase is available at ranking time.
"""

# stdlib imports
import logging
from typing import Dict, List, Tuple

# project imports
from data.records import Dataset, Interaction
from defs import Relation


logger = logging.getLogger(__name__)

MIN_PURCHASES_FOR_EVALUATION = 3
SPLIT_NAMES = ('validation', 'test')


class LeaveOneOutSplit:
    """
    The split keeps its held-out rows private behind properties, so code that should only see
    training data can be checked by swapping those properties for ones that raise.
    """
    def __init__(
        self,
        train_sequences: Dict[int, Tuple[Interaction, ...]],
        validation: Tuple[Interaction, ...],
        test: Tuple[Interaction, ...],
        bids: Tuple[Interaction, ...] = (),
    ) -> None:
        self.train_sequences = train_sequences
        self.bids = bids
        self._validation = validation
        self._test = test

    @property
    def validation(self) -> Tuple[Interaction, ...]:
        return self._validation

    @property
    def test(self) -> Tuple[Interaction, ...]:
        return self._test

    @property
    def train_interactions(self) -> List[Interaction]:
        """Every training interaction, dealers in id order, each dealer's oldest first"""
        return [i for dealer in sorted(self.train_sequences) for i in self.train_sequences[dealer]]

    @property
    def train_purchases(self) -> List[Interaction]:
        return [i for i in self.train_interactions if i.relation == Relation.PURCHASE]

    @property
    def popularity_interactions(self) -> List[Interaction]:
        """Training purchases plus every bid"""
        return self.train_purchases + list(self.bids)

    def held_out(self, which: str) -> Tuple[Interaction, ...]:
        if which == 'validation':
            return self.validation
        if which == 'test':
            return self.test
        raise ValueError(f'split must be one of {SPLIT_NAMES}, got {which!r}')

    def __repr__(self) -> str:
        return (
            f'LeaveOneOutSplit(Dealers={len(self.train_sequences)}, Train={len(self.train_interactions)}, '
            f'Validation={len(self._validation)}, Test={len(self._test)})'
        )


def leave_one_out_split(dataset: Dataset) -> LeaveOneOutSplit:
    train_sequences = {}
    validation = []
    test = []

    for dealer_id in dataset.dealer_ids:
        dealer_id = int(dealer_id)
        history = dataset.history(dealer_id)
        purchase_positions = [idx for idx, i in enumerate(history) if i.relation == Relation.PURCHASE]

        if len(purchase_positions) < MIN_PURCHASES_FOR_EVALUATION:
            train_sequences[dealer_id] = history
            continue

        validation_position, test_position = purchase_positions[-2], purchase_positions[-1]
        train_sequences[dealer_id] = history[:validation_position]
        validation.append(history[validation_position])
        test.append(history[test_position])

    bids = tuple(i for i in dataset.interactions if i.relation == Relation.BID)
    split = LeaveOneOutSplit(train_sequences, tuple(validation), tuple(test), bids)
    logger.info('Built %r', split)
    return split
