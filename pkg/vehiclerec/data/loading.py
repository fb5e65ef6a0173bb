"""
This module defines how auction datasets are read from and written to CSV.

Schemas (UTF-8, header row mandatory, '.' decimal separator):
    dealers.csv:       dealer_id, f0..f{U-1}
    vehicles.csv:      vehicle_id, f0..f{F-1}
    interactions.csv:  dealer_id, vehicle_id, timestamp, relation ("purchase" | "bid")

Errors point at the offending file and 1-based line number (the header is line 1).
"""

# stdlib imports
import logging
import os
import re
from typing import List, Tuple

# 3rd-party imports
import numpy as np
import pandas as pd

# project imports
from data.records import Dataset, Interaction
from defs import (
    CSV_FLOAT_FORMAT,
    DEALERS_CSV,
    FEATURE_PREFIX,
    INTERACTIONS_CSV,
    VEHICLES_CSV,
    Relation,
)
from exceptions import IngestionError


logger = logging.getLogger(__name__)

INTERACTION_COLUMNS = ['dealer_id', 'vehicle_id', 'timestamp', 'relation']
_FEATURE_COLUMN = re.compile(rf'^{FEATURE_PREFIX}(\d+)$')


def _line_of(position: int) -> int:
    """Data row position -> line number in the file"""
    return position + 2


def read_csv_table(path: str, required_columns: List[str]) -> pd.DataFrame:
    """Read a CSV with every cell as a string, checking the header"""
    if not os.path.isfile(path):
        raise IngestionError('file not found', path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise IngestionError('missing header row', path) from None
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestionError(f'malformed file: {exc}', path) from None

    frame.columns = [str(column).strip() for column in frame.columns]
    missing = [column for column in required_columns if column not in frame.columns]
    if missing:
        raise IngestionError(f'missing column(s) {missing}', path, 1)
    return frame.reset_index(drop=True)


def parse_int_column(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors='coerce')
    bad = values.isna() | (values % 1 != 0)
    if bad.any():
        position = int(np.argmax(bad.to_numpy()))
        raise IngestionError(f'column "{column}": cannot parse {raw.iloc[position]!r} as an integer', path, _line_of(position))
    return values.to_numpy(dtype=np.int64)


def parse_float_column(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors='coerce')
    bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=np.float64, na_value=np.nan))
    if bad.any():
        position = int(np.argmax(bad.to_numpy()))
        raise IngestionError(f'column "{column}": cannot parse {raw.iloc[position]!r} as a finite number', path, _line_of(position))
    return values.to_numpy(dtype=np.float64)


def feature_columns(frame: pd.DataFrame, path: str) -> List[str]:
    """The f0..f{n-1} columns in numeric order; gaps in the numbering are an error"""
    numbered = sorted(
        (int(match.group(1)), column)
        for column in frame.columns
        for match in [_FEATURE_COLUMN.match(column)] if match
    )
    for expected, (number, column) in enumerate(numbered):
        if number != expected:
            raise IngestionError(f'feature columns must be {FEATURE_PREFIX}0..{FEATURE_PREFIX}{len(numbered) - 1}, found "{column}"', path, 1)
    return [column for _, column in numbered]


def _read_entities(path: str, id_column: str) -> Tuple[np.ndarray, np.ndarray]:
    frame = read_csv_table(path, [id_column])
    ids = parse_int_column(frame, id_column, path)
    columns = feature_columns(frame, path)
    features = np.zeros((len(frame), len(columns)), dtype=np.float32)
    for idx, column in enumerate(columns):
        features[:, idx] = parse_float_column(frame, column, path)

    seen = {}
    for position, entity_id in enumerate(ids):
        if entity_id in seen:
            raise IngestionError(f'duplicate {id_column} {entity_id} (first seen on line {_line_of(seen[entity_id])})', path, _line_of(position))
        seen[entity_id] = position
    return ids, features


def load_interactions(dealers_path: str, vehicles_path: str, interactions_path: str) -> Dataset:
    """
    Read and validate the three CSV files. Every interaction must reference a known dealer and vehicle.
    """
    dealer_ids, dealer_features = _read_entities(dealers_path, 'dealer_id')
    vehicle_ids, vehicle_features = _read_entities(vehicles_path, 'vehicle_id')

    frame = read_csv_table(interactions_path, INTERACTION_COLUMNS)
    dealers = parse_int_column(frame, 'dealer_id', interactions_path)
    vehicles = parse_int_column(frame, 'vehicle_id', interactions_path)
    timestamps = parse_int_column(frame, 'timestamp', interactions_path)

    known_dealers = set(dealer_ids.tolist())
    known_vehicles = set(vehicle_ids.tolist())
    purchased = {}
    interactions = []
    for position, label in enumerate(frame['relation']):
        line = _line_of(position)
        try:
            relation = Relation.from_label(label)
        except KeyError:
            raise IngestionError(f'relation must be "purchase" or "bid", got {label!r}', interactions_path, line) from None
        dealer_id, vehicle_id, timestamp = int(dealers[position]), int(vehicles[position]), int(timestamps[position])
        if dealer_id not in known_dealers:
            raise IngestionError(f'unknown dealer_id {dealer_id}', interactions_path, line)
        if vehicle_id not in known_vehicles:
            raise IngestionError(f'unknown vehicle_id {vehicle_id}', interactions_path, line)
        if timestamp < 0:
            raise IngestionError(f'negative timestamp {timestamp}', interactions_path, line)
        if relation == Relation.PURCHASE:
            if vehicle_id in purchased:
                raise IngestionError(f'vehicle {vehicle_id} already purchased on line {purchased[vehicle_id]}', interactions_path, line)
            purchased[vehicle_id] = line
        interactions.append(Interaction(dealer_id, vehicle_id, timestamp, relation))

    dataset = Dataset(dealer_ids, dealer_features, vehicle_ids, vehicle_features, interactions)
    logger.info('Loaded %r', dataset)
    return dataset


def load_dataset(data_dir: str) -> Dataset:
    """Load the standard file names from a data directory"""
    if not os.path.isdir(data_dir):
        raise IngestionError('data directory not found', data_dir)
    return load_interactions(
        os.path.join(data_dir, DEALERS_CSV),
        os.path.join(data_dir, VEHICLES_CSV),
        os.path.join(data_dir, INTERACTIONS_CSV),
    )


def _entity_frame(id_column: str, ids: np.ndarray, features: np.ndarray) -> pd.DataFrame:
    frame = pd.DataFrame(features, columns=[f'{FEATURE_PREFIX}{idx}' for idx in range(features.shape[1])])
    frame.insert(0, id_column, ids)
    return frame


def write_dataset(dataset: Dataset, out_dir: str) -> None:
    """Write the three CSV files. Output bytes depend only on the dataset contents"""
    os.makedirs(out_dir, exist_ok=True)
    csv_options = {'index': False, 'float_format': CSV_FLOAT_FORMAT, 'lineterminator': '\n', 'encoding': 'utf-8'}

    _entity_frame('dealer_id', dataset.dealer_ids, dataset.dealer_features).to_csv(
        os.path.join(out_dir, DEALERS_CSV), **csv_options
    )
    _entity_frame('vehicle_id', dataset.vehicle_ids, dataset.vehicle_features).to_csv(
        os.path.join(out_dir, VEHICLES_CSV), **csv_options
    )
    pd.DataFrame(
        [(i.dealer_id, i.vehicle_id, i.timestamp, i.relation.label) for i in dataset.interactions],
        columns=INTERACTION_COLUMNS,
    ).to_csv(os.path.join(out_dir, INTERACTIONS_CSV), **csv_options)
    logger.info('Wrote %r to %s', dataset, out_dir)
