"""
Shared fixtures: a hand-built auction dataset small enough to reason about line by line, a small
generated dataset, and a small set of generated contracts.
"""

# 3rd-party imports
import numpy as np
import pytest

# project imports
from data.contracts import ContractConfig, generate_contracts
from data.records import Dataset, Interaction
from data.synthetic import SyntheticConfig, generate_synthetic
from defs import Relation
from models import nbo, nbo_baselines
import debug


P, B = Relation.PURCHASE, Relation.BID


@pytest.fixture(autouse=True)
def no_gradient_fault(monkeypatch):
    monkeypatch.setattr(debug, 'GRADIENT_FAULT', None)
    monkeypatch.setattr(debug, 'CHECK_FINITE', True)


@pytest.fixture
def toy_interactions():
    """
    Dealer 10: four purchases and three bids. Dealer 11: three purchases and one bid.
    Dealer 12: a single purchase, so it never gets evaluation cases.
    """
    return [
        Interaction(10, 100, 1000, B),
        Interaction(10, 100, 1010, P),
        Interaction(11, 101, 1020, B),
        Interaction(10, 101, 1030, B),
        Interaction(11, 101, 1040, P),
        Interaction(10, 102, 1050, P),
        Interaction(12, 103, 1060, P),
        Interaction(11, 104, 1070, P),
        Interaction(10, 105, 1080, B),
        Interaction(10, 105, 1090, P),
        Interaction(11, 106, 1100, P),
        Interaction(10, 107, 1110, P),
    ]


@pytest.fixture
def toy_dataset(toy_interactions):
    rng = np.random.default_rng(7)
    vehicle_ids = np.arange(100, 112)
    return Dataset(
        dealer_ids=[10, 11, 12],
        dealer_features=rng.normal(size=(3, 2)),
        vehicle_ids=vehicle_ids,
        vehicle_features=rng.normal(size=(len(vehicle_ids), 3)),
        interactions=toy_interactions,
    )


@pytest.fixture(scope='session')
def small_synthetic_config():
    return SyntheticConfig(
        n_dealers=20,
        n_vehicles=400,
        latent_dim=4,
        user_features=6,
        item_features=8,
        candidates_per_auction=10,
        seed=3,
    )


@pytest.fixture(scope='session')
def small_synthetic(small_synthetic_config):
    return generate_synthetic(small_synthetic_config)


@pytest.fixture(scope='session')
def small_contract_config():
    return ContractConfig(n_contracts=400, n_classes=10, n_occupations=4, n_regions=3, n_fuel_types=2, seed=5)


@pytest.fixture(scope='session')
def small_contracts(small_contract_config):
    return generate_contracts(small_contract_config)


@pytest.fixture
def fitted_contract_ids(monkeypatch):
    """Contract ids of every record the vocabularies, numeric scaling and class popularity are fit on"""
    seen = {'vocabularies': set(), 'numeric_stats': set(), 'popularity': set()}
    build_vocabularies = nbo.build_vocabularies
    fit_numeric_stats = nbo.NumericStats.fit.__func__
    class_popularity_counts = nbo_baselines.class_popularity_counts

    def recording_build_vocabularies(records, schema):
        seen['vocabularies'].update(r.contract_id for r in records)
        return build_vocabularies(records, schema)

    def recording_fit(cls, records, width):
        seen['numeric_stats'].update(r.contract_id for r in records)
        return fit_numeric_stats(cls, records, width)

    def recording_class_popularity_counts(records, n_classes):
        seen['popularity'].update(r.contract_id for r in records)
        return class_popularity_counts(records, n_classes)

    monkeypatch.setattr(nbo, 'build_vocabularies', recording_build_vocabularies)
    monkeypatch.setattr(nbo_baselines, 'build_vocabularies', recording_build_vocabularies)
    monkeypatch.setattr(nbo.NumericStats, 'fit', classmethod(recording_fit))
    monkeypatch.setattr(nbo_baselines, 'class_popularity_counts', recording_class_popularity_counts)
    return seen
