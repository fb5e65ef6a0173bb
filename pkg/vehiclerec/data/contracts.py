"""
This module defines the Next-Best-Offer contract data: records, the column schema, the synthetic
contract generator, CSV + JSON schema I/O, and the random 70/10/20 split.

A contract carries customer categoricals (occupation, region, fuel type), numericals (credit score,
contract duration, model year, age), the class of the vehicle being returned, and the class of
the vehicle chosen for the renewal (the target).

Synthetic targets mix three behaviors:
    * repeat:     with probability `repeat_rate`, the renewal is the previous class
    * rule:       otherwise, with probability `rule_strength`, the class planted for the
                  customer's (occupation, fuel type) pair
    * popularity: otherwise a draw from the skewed class popularity
With `planted_rule` set, every target is the planted class.
"""

# stdlib imports
from dataclasses import dataclass
import json
import logging
import os
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple

# 3rd-party imports
import numpy as np
import pandas as pd

# project imports
from data.loading import parse_float_column, parse_int_column, read_csv_table
from defs import CONTRACTS_CSV, CONTRACTS_SCHEMA, CSV_FLOAT_FORMAT
from exceptions import ConfigError, IngestionError


logger = logging.getLogger(__name__)

CATEGORICAL = 'categorical'
NUMERICAL = 'numerical'
COLUMN_KINDS = {
    'contract_id': 'id',
    'occupation': CATEGORICAL,
    'region': CATEGORICAL,
    'fuel_type': CATEGORICAL,
    'credit_score': NUMERICAL,
    'contract_duration': NUMERICAL,
    'model_year': NUMERICAL,
    'age': NUMERICAL,
    'previous_class': 'class',
    'target_class': 'target',
}


class ContractRecord(NamedTuple):
    contract_id: int
    categorical: Tuple[str, ...]
    numerical: Tuple[float, ...]
    previous_class: int
    target_class: int


class ContractSchema(NamedTuple):
    categorical: Tuple[str, ...]
    numerical: Tuple[str, ...]
    n_classes: int

    def to_json(self) -> Dict[str, Any]:
        columns = [{'name': 'contract_id', 'kind': 'id'}]
        columns += [{'name': name, 'kind': CATEGORICAL} for name in self.categorical]
        columns += [{'name': name, 'kind': NUMERICAL} for name in self.numerical]
        columns += [{'name': 'previous_class', 'kind': 'class'}, {'name': 'target_class', 'kind': 'target'}]
        return {'columns': columns, 'n_classes': self.n_classes}

    @classmethod
    def from_json(cls, payload: Dict[str, Any]) -> "ContractSchema":
        try:
            columns = payload['columns']
            n_classes = int(payload['n_classes'])
            categorical = tuple(c['name'] for c in columns if c['kind'] == CATEGORICAL)
            numerical = tuple(c['name'] for c in columns if c['kind'] == NUMERICAL)
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestionError(f'malformed contract schema: {exc!r}') from None
        if n_classes < 2:
            raise IngestionError(f'contract schema needs at least 2 classes, got {n_classes}')
        return cls(categorical, numerical, n_classes)

    @property
    def columns(self) -> List[str]:
        return ['contract_id', *self.categorical, *self.numerical, 'previous_class', 'target_class']


DEFAULT_SCHEMA_COLUMNS = (
    tuple(name for name, kind in COLUMN_KINDS.items() if kind == CATEGORICAL),
    tuple(name for name, kind in COLUMN_KINDS.items() if kind == NUMERICAL),
)


@dataclass
class ContractConfig:
    n_contracts: int = 6000
    n_classes: int = 70
    repeat_rate: float = 0.55
    rule_strength: float = 0.8
    planted_rule: bool = False
    popularity_skew: float = 1.0
    n_occupations: int = 12
    n_regions: int = 17
    n_fuel_types: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_contracts < 1:
            raise ConfigError(f'n_contracts must be positive, got {self.n_contracts}')
        if self.n_classes < 2:
            raise ConfigError(f'n_classes must be >= 2, got {self.n_classes}')
        for name in ('repeat_rate', 'rule_strength'):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f'{name} must be in [0, 1], got {getattr(self, name)}')
        for name in ('n_occupations', 'n_regions', 'n_fuel_types'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')

    @property
    def schema(self) -> ContractSchema:
        return ContractSchema(*DEFAULT_SCHEMA_COLUMNS, n_classes=self.n_classes)


def planted_class(occupation: int, fuel_type: int, n_fuel_types: int, n_classes: int) -> int:
    """The class planted for an (occupation, fuel type) pair"""
    return (occupation * n_fuel_types + fuel_type) % n_classes


def class_popularity(n_classes: int, skew: float, rng: np.random.Generator) -> np.ndarray:
    """Zipf-like class shares, assigned to classes in a random order"""
    shares = 1.0 / np.arange(1, n_classes + 1) ** skew
    shares = shares[rng.permutation(n_classes)]
    return shares / shares.sum()


def generate_contracts(config: ContractConfig) -> Tuple[List[ContractRecord], ContractSchema]:
    rng = np.random.default_rng(config.seed)
    n = config.n_contracts

    popularity = class_popularity(config.n_classes, config.popularity_skew, rng)
    occupation_shares = 1.0 / np.arange(1, config.n_occupations + 1)
    occupations = rng.choice(config.n_occupations, size=n, p=occupation_shares / occupation_shares.sum())
    regions = rng.integers(0, config.n_regions, size=n)
    fuel_types = rng.integers(0, config.n_fuel_types, size=n)

    credit_scores = np.clip(rng.normal(650.0, 80.0, size=n), 300.0, 850.0).round()
    durations = rng.choice([24.0, 36.0, 48.0, 60.0], size=n)
    model_years = rng.integers(2010, 2020, size=n).astype(np.float64)
    ages = np.clip(rng.normal(45.0, 12.0, size=n), 18.0, 80.0).round()

    previous = rng.choice(config.n_classes, size=n, p=popularity)
    behavior = rng.random(n)
    rule_draw = rng.random(n)
    popular_draw = rng.choice(config.n_classes, size=n, p=popularity)

    records = []
    for idx in range(n):
        rule = planted_class(int(occupations[idx]), int(fuel_types[idx]), config.n_fuel_types, config.n_classes)
        if config.planted_rule:
            target = rule
        elif behavior[idx] < config.repeat_rate:
            target = int(previous[idx])
        elif rule_draw[idx] < config.rule_strength:
            target = rule
        else:
            target = int(popular_draw[idx])

        records.append(ContractRecord(
            contract_id=idx,
            categorical=(f'occ{occupations[idx]:02d}', f'region{regions[idx]:02d}', f'fuel{fuel_types[idx]}'),
            numerical=(float(credit_scores[idx]), float(durations[idx]), float(model_years[idx]), float(ages[idx])),
            previous_class=int(previous[idx]),
            target_class=target,
        ))

    logger.info('Generated %d contracts over %d classes (seed %d)', n, config.n_classes, config.seed)
    return records, config.schema


def split_contracts(
    records: Sequence[ContractRecord],
    seed: int,
    fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> Tuple[List[ContractRecord], List[ContractRecord], List[ContractRecord]]:
    """Random train/validation/test split; every record lands in exactly one part"""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ConfigError(f'split fractions must be three non-negative numbers summing to 1, got {fractions}')

    order = np.random.default_rng(seed).permutation(len(records))
    n_train = int(round(fractions[0] * len(records)))
    n_validation = int(round(fractions[1] * len(records)))
    train = [records[i] for i in order[:n_train]]
    validation = [records[i] for i in order[n_train:n_train + n_validation]]
    test = [records[i] for i in order[n_train + n_validation:]]
    return train, validation, test


def write_contracts(records: Sequence[ContractRecord], schema: ContractSchema, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    rows = [
        (r.contract_id, *r.categorical, *r.numerical, r.previous_class, r.target_class)
        for r in records
    ]
    pd.DataFrame(rows, columns=schema.columns).to_csv(
        os.path.join(out_dir, CONTRACTS_CSV),
        index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n', encoding='utf-8',
    )
    with open(os.path.join(out_dir, CONTRACTS_SCHEMA), 'w', encoding='utf-8') as f:
        json.dump(schema.to_json(), f, indent=2, sort_keys=True)
        f.write('\n')


def load_schema(path: str) -> ContractSchema:
    if not os.path.isfile(path):
        raise IngestionError('file not found', path)
    try:
        with open(path, encoding='utf-8') as f:
            payload = json.load(f)
    except json.JSONDecodeError as exc:
        raise IngestionError(f'invalid JSON: {exc}', path) from None
    return ContractSchema.from_json(payload)


def load_contracts(data_dir: str) -> Tuple[List[ContractRecord], ContractSchema]:
    schema = load_schema(os.path.join(data_dir, CONTRACTS_SCHEMA))
    path = os.path.join(data_dir, CONTRACTS_CSV)
    frame = read_csv_table(path, schema.columns)

    ids = parse_int_column(frame, 'contract_id', path)
    previous = parse_int_column(frame, 'previous_class', path)
    targets = parse_int_column(frame, 'target_class', path)
    numericals = np.stack([parse_float_column(frame, name, path) for name in schema.numerical], axis=1) \
        if schema.numerical else np.zeros((len(frame), 0))

    for column, values in (('previous_class', previous), ('target_class', targets)):
        bad = (values < 0) | (values >= schema.n_classes)
        if bad.any():
            position = int(np.argmax(bad))
            raise IngestionError(f'{column} {values[position]} outside [0, {schema.n_classes})', path, position + 2)

    records = [
        ContractRecord(
            contract_id=int(ids[idx]),
            categorical=tuple(str(frame[name].iloc[idx]) for name in schema.categorical),
            numerical=tuple(float(v) for v in numericals[idx]),
            previous_class=int(previous[idx]),
            target_class=int(targets[idx]),
        )
        for idx in range(len(frame))
    ]
    logger.info('Loaded %d contracts over %d classes from %s', len(records), schema.n_classes, data_dir)
    return records, schema
