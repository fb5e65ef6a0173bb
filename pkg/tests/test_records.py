# 3rd-party imports
import numpy as np
import pytest

# project imports
from data.loading import load_dataset, load_interactions, write_dataset
from data.records import Dataset, Interaction
from defs import DEALERS_CSV, INTERACTIONS_CSV, VEHICLES_CSV, Relation
from exceptions import IngestionError, UnknownDealerError


P, B = Relation.PURCHASE, Relation.BID


def test_histories_are_chronological(toy_dataset):
    history = toy_dataset.history(10)
    assert [i.timestamp for i in history] == sorted(i.timestamp for i in history)
    assert [i.vehicle_id for i in history][:3] == [100, 100, 101]


def test_equal_timestamps_keep_input_order():
    dataset = Dataset([1], np.zeros((1, 1)), [5, 6], np.zeros((2, 1)), [
        Interaction(1, 6, 100, B),
        Interaction(1, 5, 100, B),
    ])
    assert [i.vehicle_id for i in dataset.history(1)] == [6, 5]


def test_history_before_is_strict(toy_dataset):
    assert [i.timestamp for i in toy_dataset.history_before(10, 1050)] == [1000, 1010, 1030]


def test_counts(toy_dataset):
    assert toy_dataset.n_dealers == 3
    assert toy_dataset.n_vehicles == 12
    assert toy_dataset.purchase_count == 8
    assert toy_dataset.bid_count == 4


def test_unknown_dealer(toy_dataset):
    assert not toy_dataset.has_dealer(99)
    with pytest.raises(UnknownDealerError):
        toy_dataset.history(99)


def test_second_purchase_of_a_vehicle_is_rejected():
    with pytest.raises(IngestionError, match='second time'):
        Dataset([1, 2], np.zeros((2, 1)), [5], np.zeros((1, 1)), [
            Interaction(1, 5, 10, P),
            Interaction(2, 5, 20, P),
        ])


def test_write_then_load_gives_the_same_dataset(tmp_path, toy_dataset):
    write_dataset(toy_dataset, str(tmp_path))
    loaded = load_dataset(str(tmp_path))
    assert loaded.interactions == toy_dataset.interactions
    np.testing.assert_array_equal(loaded.vehicle_features, toy_dataset.vehicle_features)
    np.testing.assert_array_equal(loaded.dealer_ids, toy_dataset.dealer_ids)


def test_writing_twice_gives_identical_bytes(tmp_path, toy_dataset):
    write_dataset(toy_dataset, str(tmp_path / 'a'))
    write_dataset(toy_dataset, str(tmp_path / 'b'))
    for name in (DEALERS_CSV, VEHICLES_CSV, INTERACTIONS_CSV):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


@pytest.fixture
def csv_dir(tmp_path):
    (tmp_path / DEALERS_CSV).write_text('dealer_id,f0\n1,0.5\n2,-0.5\n')
    (tmp_path / VEHICLES_CSV).write_text('vehicle_id,f0,f1\n7,1,2\n8,3,4\n')
    return tmp_path


def _load(csv_dir, interactions: str):
    (csv_dir / INTERACTIONS_CSV).write_text(interactions)
    return load_interactions(str(csv_dir / DEALERS_CSV), str(csv_dir / VEHICLES_CSV), str(csv_dir / INTERACTIONS_CSV))


def test_load_valid_interactions(csv_dir):
    dataset = _load(csv_dir, 'dealer_id,vehicle_id,timestamp,relation\n1,7,10,bid\n2,7,20,purchase\n')
    assert dataset.bid_count == 1
    assert dataset.vehicle_feature_dim == 2


@pytest.mark.parametrize('body, line, message', [
    ('1,7,10,bid\n3,7,20,purchase\n', 3, 'unknown dealer_id 3'),
    ('1,9,10,bid\n', 2, 'unknown vehicle_id 9'),
    ('1,7,10,bid\n2,7,x,purchase\n', 3, 'timestamp'),
    ('1,7,10,watch\n', 2, 'relation'),
    ('1,7,-5,bid\n', 2, 'negative timestamp'),
    ('1,7,10,purchase\n2,7,20,purchase\n', 3, 'already purchased'),
])
def test_bad_rows_report_their_line(csv_dir, body, line, message):
    with pytest.raises(IngestionError, match=message) as info:
        _load(csv_dir, 'dealer_id,vehicle_id,timestamp,relation\n' + body)
    assert info.value.line == line
    assert str(info.value).startswith(f'{csv_dir / INTERACTIONS_CSV}:{line}:')


def test_missing_column(csv_dir):
    with pytest.raises(IngestionError, match='relation') as info:
        _load(csv_dir, 'dealer_id,vehicle_id,timestamp\n1,7,10\n')
    assert info.value.line == 1


def test_missing_header(csv_dir):
    with pytest.raises(IngestionError, match='header'):
        _load(csv_dir, '')


def test_duplicate_ids(csv_dir):
    (csv_dir / DEALERS_CSV).write_text('dealer_id,f0\n1,0.5\n1,0.7\n')
    with pytest.raises(IngestionError, match='duplicate') as info:
        _load(csv_dir, 'dealer_id,vehicle_id,timestamp,relation\n')
    assert info.value.line == 3


def test_feature_columns_must_be_contiguous(csv_dir):
    (csv_dir / VEHICLES_CSV).write_text('vehicle_id,f0,f2\n7,1,2\n')
    with pytest.raises(IngestionError, match='f2'):
        _load(csv_dir, 'dealer_id,vehicle_id,timestamp,relation\n')


def test_missing_data_dir_names_the_path(tmp_path):
    missing = str(tmp_path / 'nowhere')
    with pytest.raises(IngestionError, match='nowhere'):
        load_dataset(missing)
