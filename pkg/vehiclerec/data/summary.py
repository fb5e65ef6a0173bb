"""
This module computes the dataset statistics table: entity counts, relation counts, and densities.

Densities are reported in percent: count(relation) / (users x items) x 100.
"""

# stdlib imports
from typing import Any, Dict, Optional

# project imports
from data.records import Dataset
from defs import Relation
from exceptions import UndefinedDensityError


def summarize_counts(
    users: int,
    items: int,
    purchases: int,
    biddings: int,
    unique_items: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Density arithmetic on raw counts. `unique_items` is the number of distinct purchased vehicles
    and defaults to `purchases` (every auctioned vehicle is unique).
    """
    if users <= 0 or items <= 0:
        raise UndefinedDensityError(f'density is undefined for {users} users and {items} items')

    cells = users * items
    if unique_items is None:
        unique_items = purchases
    return {
        'users': users,
        'items': items,
        'purchases': purchases,
        'biddings': biddings,
        'purchase_density': 100.0 * purchases / cells,
        'bidding_density': 100.0 * biddings / cells,
        'unique_item_pct': 100.0 * unique_items / purchases if purchases else 100.0,
    }


def stats(dataset: Dataset) -> Dict[str, Any]:
    purchased = {i.vehicle_id for i in dataset.interactions if i.relation == Relation.PURCHASE}
    summary = summarize_counts(
        dataset.n_dealers,
        dataset.n_vehicles,
        dataset.purchase_count,
        dataset.bid_count,
        unique_items=len(purchased),
    )
    summary['user_features'] = dataset.dealer_feature_dim
    summary['item_features'] = dataset.vehicle_feature_dim
    return summary
