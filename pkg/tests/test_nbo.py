# 3rd-party imports
import numpy as np
import pytest

# project imports
from data.contracts import ContractConfig, ContractRecord, ContractSchema, generate_contracts, split_contracts
from evaluation import evaluate_nbo
from exceptions import ConfigError, ModelKindMismatchError
from models.nbo import (
    LOG_METRIC_NAMES,
    UNKNOWN_INDEX,
    NboConfig,
    NboModel,
    NboRanker,
    NumericStats,
    Vocabulary,
    build_vocabularies,
    contraction_widths,
    embedding_dim,
    load_nbo,
    nbo_forward,
    save_nbo,
    train_nbo,
)
from models.sasrec_auc import load_sasrec
from stats import TrainingLog


def untrained_model(records, schema, **overrides):
    train, _, _ = split_contracts(records, seed=0)
    return NboModel(schema, build_vocabularies(train, schema), NumericStats.fit(train, len(schema.numerical)), NboConfig(**overrides))


def test_vocabulary_reserves_the_unknown_index():
    vocabulary = Vocabulary(['b', 'a'])
    assert vocabulary.index('b') == 1
    assert vocabulary.index('a') == 2
    assert vocabulary.index('never seen') == UNKNOWN_INDEX
    assert len(vocabulary) == 3
    assert vocabulary.cardinality == 2


@pytest.mark.parametrize('cardinality, expected', [(1, 1), (5, 3), (64, 32), (500, 32)])
def test_embedding_dim(cardinality, expected):
    assert embedding_dim(cardinality) == expected


def test_contraction_widths_halve_down_to_the_target():
    assert contraction_widths(300) == [150, 75, 37]
    assert contraction_widths(40) == [20]
    assert contraction_widths(129) == [64]


def test_numeric_stats_guard_constant_columns():
    records = [ContractRecord(i, (), (1.0, float(i)), 0, 0) for i in range(4)]
    stats = NumericStats.fit(records, 2)
    assert stats.std[0] == 1.0
    np.testing.assert_allclose(stats.apply(np.array([[1.0, 1.5]])), [[0.0, 0.0]])


def test_untrained_model_predicts_uniformly(small_contracts):
    records, schema = small_contracts
    probabilities = nbo_forward(untrained_model(records, schema), records[:7])
    np.testing.assert_allclose(probabilities, np.full((7, schema.n_classes), 1.0 / schema.n_classes), rtol=1e-6)


def test_unseen_categories_map_to_unknown(small_contracts):
    records, schema = small_contracts
    model = untrained_model(records, schema)
    stranger = records[0]._replace(categorical=('occ99', 'region99', 'fuel9'))
    encoded = model.encode([stranger])
    assert encoded.categorical.tolist() == [[UNKNOWN_INDEX] * 3]
    assert nbo_forward(model, [stranger]).shape == (1, schema.n_classes)


def test_vocabularies_come_from_training_contracts_only(small_contracts):
    records, schema = small_contracts
    train = records[:5]
    vocabularies = build_vocabularies(train, schema)
    assert set(vocabularies['occupation'].tokens) == {r.categorical[0] for r in train}


def test_training_fits_encodings_on_training_contracts_only(small_contracts, fitted_contract_ids):
    records, schema = small_contracts
    train, validation, test = split_contracts(records, seed=0)
    model = train_nbo(train, validation, schema, NboConfig(epochs=1))
    evaluate_nbo(NboRanker(model), test, schema.n_classes)
    train_ids = {r.contract_id for r in train}
    assert fitted_contract_ids['vocabularies'] == train_ids
    assert fitted_contract_ids['numeric_stats'] == train_ids


def test_encode_rejects_foreign_records(small_contracts):
    records, schema = small_contracts
    model = untrained_model(records, schema)
    with pytest.raises(ConfigError):
        model.encode([ContractRecord(0, ('occ00',), (1.0,), 0, 0)])


def test_scores_do_not_depend_on_batch_composition(small_contracts):
    records, schema = small_contracts
    train, validation, _ = split_contracts(records, seed=0)
    model = train_nbo(train, validation, schema, NboConfig(epochs=1))
    together = nbo_forward(model, records[:100])
    for idx in (0, 63, 64, 99):
        np.testing.assert_array_equal(nbo_forward(model, [records[idx]])[0], together[idx])


def test_learns_a_planted_rule():
    records, schema = generate_contracts(ContractConfig(
        n_contracts=1500, n_classes=10, planted_rule=True, n_occupations=4, n_regions=3, n_fuel_types=2, seed=11,
    ))
    train, validation, test = split_contracts(records, seed=0)
    log = TrainingLog(metric_names=LOG_METRIC_NAMES)
    model = train_nbo(train, validation, schema, NboConfig(epochs=15, learning_rate=1e-2, batch_size=64, patience=0), log)
    report = evaluate_nbo(NboRanker(model), test, schema.n_classes, k=[1, 5])
    assert report.metrics['hr@5'] > 0.95
    assert report.metrics['hr@1'] > 0.7
    assert log.records[0]['epoch'] == 0
    assert 'val_hr5' in log.records[0]


def test_save_and_load_predict_identically(tmp_path, small_contracts):
    records, schema = small_contracts
    train, validation, test = split_contracts(records, seed=0)
    model = train_nbo(train, validation, schema, NboConfig(epochs=2))
    path = str(tmp_path / 'nbo.ckpt')
    save_nbo(path, model)
    loaded = load_nbo(path)
    assert loaded.schema == schema
    assert loaded.vocabularies == model.vocabularies
    np.testing.assert_array_equal(nbo_forward(loaded, test), nbo_forward(model, test))

    with pytest.raises(ModelKindMismatchError):
        load_sasrec(path)


def test_model_rejects_mismatched_vocabularies(small_contracts):
    _, schema = small_contracts
    stats = NumericStats(np.zeros(len(schema.numerical)), np.ones(len(schema.numerical)))
    with pytest.raises(ConfigError):
        NboModel(schema, {'occupation': Vocabulary(['a'])}, stats, NboConfig())


def test_training_needs_contracts():
    schema = ContractSchema(('occupation',), ('age',), 3)
    with pytest.raises(ConfigError):
        train_nbo([], [], schema, NboConfig())
