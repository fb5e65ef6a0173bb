"""
This module defines how run settings are loaded and overridden by the command line.

A run config is a JSON object with one optional section per component:

    {
        "synthetic": {...},     SyntheticConfig
        "contracts": {...},     ContractConfig
        "sasrec":    {...},     SasrecConfig
        "pointwise": {...},     PointwiseConfig
        "nbo":       {...},     NboConfig
        "eval":      {...}      EvalProtocol
    }

Missing sections and keys keep their documented defaults, unknown ones are rejected.
Command-line flags are applied afterwards through `update_setting`, so flags win.
"""

# stdlib imports
from dataclasses import asdict, fields, replace
import json
import logging
import os
from typing import Any, Dict

# project imports
from data.contracts import ContractConfig
from data.synthetic import SyntheticConfig
from evaluation import EvalProtocol
from exceptions import ConfigError, IngestionError
from models.nbo import NboConfig
from models.pointwise import PointwiseConfig
from models.sasrec_auc import SasrecConfig


logger = logging.getLogger(__name__)


SECTION_TYPES = {
    'synthetic': SyntheticConfig,
    'contracts': ContractConfig,
    'sasrec': SasrecConfig,
    'pointwise': PointwiseConfig,
    'nbo': NboConfig,
    'eval': EvalProtocol,
}


class RunConfig:
    """
    Holds one validated config object per section. Each section is replaced, never mutated,
    so every update goes back through the section's own validation.
    """
    def __init__(self, **sections: Any) -> None:
        unknown = sorted(set(sections) - set(SECTION_TYPES))
        if unknown:
            raise ConfigError(f'unknown config sections {unknown}, expected a subset of {sorted(SECTION_TYPES)}')
        for name, section_type in SECTION_TYPES.items():
            section = sections.get(name)
            setattr(self, name, section if section is not None else section_type())

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunConfig":
        if not isinstance(payload, dict):
            raise ConfigError(f'a run config must be a JSON object, got {type(payload).__name__}')
        unknown = sorted(set(payload) - set(SECTION_TYPES))
        if unknown:
            raise ConfigError(f'unknown config sections {unknown}, expected a subset of {sorted(SECTION_TYPES)}')

        sections = {}
        for name, values in payload.items():
            section_type = SECTION_TYPES[name]
            if not isinstance(values, dict):
                raise ConfigError(f'config section "{name}" must be a JSON object')
            known = {f.name for f in fields(section_type)}
            unknown_keys = sorted(set(values) - known)
            if unknown_keys:
                raise ConfigError(f'unknown keys {unknown_keys} in config section "{name}"')
            try:
                sections[name] = section_type(**values)
            except TypeError as exc:
                raise ConfigError(f'config section "{name}": {exc}') from None
        return cls(**sections)

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        if not os.path.isfile(path):
            raise IngestionError('config file not found', path)
        try:
            with open(path, encoding='utf-8') as f:
                payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise IngestionError(f'invalid JSON: {exc}', path) from None
        logger.info('Loaded run config from %s', path)
        return cls.from_dict(payload)

    def update_setting(self, section: str, key: str, value: Any) -> None:
        """Override one key; a None value means the flag was not given"""
        self.update_settings(section, {key: value})

    def update_settings(self, section: str, values: Dict[str, Any]) -> None:
        """Override several keys of one section at once, validated together"""
        if section not in SECTION_TYPES:
            raise ConfigError(f'unknown config section "{section}"')
        current = getattr(self, section)
        unknown = sorted(set(values) - {f.name for f in fields(current)})
        if unknown:
            raise ConfigError(f'unknown keys {unknown} in config section "{section}"')
        overrides = {key: value for key, value in values.items() if value is not None}
        if overrides:
            setattr(self, section, replace(current, **overrides))

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: asdict(getattr(self, name)) for name in SECTION_TYPES}

    def __str__(self) -> str:
        sections = ' | '.join(
            f'{name}: ' + ', '.join(f'{key}={value}' for key, value in asdict(getattr(self, name)).items())
            for name in SECTION_TYPES
        )
        return f'RunConfig[ {sections} ]'

    def __repr__(self) -> str:
        return self.__str__()
