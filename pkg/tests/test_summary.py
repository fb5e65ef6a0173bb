# 3rd-party imports
import pytest

# project imports
from data.summary import stats, summarize_counts
from exceptions import UndefinedDensityError


def test_densities_from_raw_counts():
    summary = summarize_counts(3220, 269104, 269104, 375349)
    assert f"{summary['purchase_density']:.3f}" == '0.031'
    assert f"{summary['bidding_density']:.3f}" == '0.043'
    assert summary['unique_item_pct'] == 100.0


@pytest.mark.parametrize('users, items', [(0, 10), (10, 0)])
def test_density_needs_users_and_items(users, items):
    with pytest.raises(UndefinedDensityError):
        summarize_counts(users, items, 0, 0)


def test_stats_of_a_dataset(toy_dataset):
    summary = stats(toy_dataset)
    assert summary['users'] == 3
    assert summary['items'] == 12
    assert summary['purchases'] == 8
    assert summary['biddings'] == 4
    assert summary['purchase_density'] == pytest.approx(100.0 * 8 / 36)
    assert summary['user_features'] == 2
    assert summary['item_features'] == 3
