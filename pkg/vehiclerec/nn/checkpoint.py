"""
This module defines the binary checkpoint format shared by every trained model.

Layout (all integers 64-bit little-endian):
    magic                     8 bytes
    header length             uint64
    header                    UTF-8 JSON {format_version, model_kind, hyperparams, extras, num_params}
    per parameter block:
        name length           uint64
        name                  UTF-8 bytes
        rank                  uint64
        extents               rank x uint64
        data                  32-bit little-endian floats, row-major

The header JSON is written with sorted keys so the same model always produces the same bytes.
"""

# stdlib imports
from collections import OrderedDict
import json
import math
import struct
from typing import Any, Dict, NamedTuple, Sequence, Tuple, Type, TypeVar

# 3rd-party imports
import numpy as np

# project imports
from defs import CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC
from exceptions import CheckpointError, ModelKindMismatchError


ConfigT = TypeVar('ConfigT')

_UINT64 = struct.Struct('<Q')
HEADER_KEYS = ('format_version', 'model_kind', 'hyperparams', 'extras', 'num_params')


class Checkpoint(NamedTuple):
    model_kind: str
    hyperparams: Dict[str, Any]
    params: "OrderedDict[str, np.ndarray]"
    extras: Dict[str, Any]


def encode_checkpoint(
    model_kind: str,
    hyperparams: Dict[str, Any],
    params: "OrderedDict[str, np.ndarray]",
    extras: Dict[str, Any] = None,
) -> bytes:
    header = {
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'model_kind': model_kind,
        'hyperparams': hyperparams,
        'extras': extras if extras is not None else {},
        'num_params': len(params),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')

    chunks = [CHECKPOINT_MAGIC, _UINT64.pack(len(header_bytes)), header_bytes]
    for name, value in params.items():
        name_bytes = name.encode('utf-8')
        value = np.asarray(value)
        chunks.append(_UINT64.pack(len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(_UINT64.pack(value.ndim))
        chunks.extend(_UINT64.pack(extent) for extent in value.shape)
        chunks.append(np.ascontiguousarray(value, dtype='<f4').tobytes())
    return b''.join(chunks)


def _decode_header(raw: bytes) -> Dict[str, Any]:
    try:
        header = json.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f'checkpoint header is not valid UTF-8 JSON: {exc}') from None
    if not isinstance(header, dict):
        raise CheckpointError('checkpoint header is not a JSON object')

    missing = [key for key in HEADER_KEYS if key not in header]
    if missing:
        raise CheckpointError(f'checkpoint header is missing {", ".join(missing)}')
    if header['format_version'] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f'unsupported checkpoint format version {header["format_version"]}')
    if not isinstance(header['num_params'], int) or header['num_params'] < 0:
        raise CheckpointError(f'checkpoint header has a bad parameter count {header["num_params"]!r}')
    if not isinstance(header['hyperparams'], dict) or not isinstance(header['extras'], dict):
        raise CheckpointError('checkpoint hyperparams and extras must be JSON objects')
    return header


def decode_checkpoint(payload: bytes, expected_kind: str = None) -> Checkpoint:
    if payload[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError('not a checkpoint file (bad magic bytes)')

    offset = len(CHECKPOINT_MAGIC)

    def read_uint64() -> int:
        nonlocal offset
        if offset + _UINT64.size > len(payload):
            raise CheckpointError('checkpoint is truncated')
        (value,) = _UINT64.unpack_from(payload, offset)
        offset += _UINT64.size
        return value

    def read_bytes(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(payload):
            raise CheckpointError('checkpoint is truncated')
        chunk = payload[offset:offset + count]
        offset += count
        return chunk

    header = _decode_header(read_bytes(read_uint64()))
    if expected_kind is not None and header['model_kind'] != expected_kind:
        raise ModelKindMismatchError(f'checkpoint holds a "{header["model_kind"]}" model, expected "{expected_kind}"')

    params = OrderedDict()
    for _ in range(header['num_params']):
        try:
            name = read_bytes(read_uint64()).decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError(f'parameter name {len(params)} is not valid UTF-8') from None
        rank = read_uint64()
        shape = tuple(read_uint64() for _ in range(rank))
        count = math.prod(shape)
        params[name] = np.frombuffer(read_bytes(4 * count), dtype='<f4').astype(np.float32).reshape(shape)

    if offset != len(payload):
        raise CheckpointError(f'{len(payload) - offset} trailing bytes after the last parameter block')

    return Checkpoint(header['model_kind'], header['hyperparams'], params, header['extras'])


def save_checkpoint(path, model_kind: str, hyperparams: Dict[str, Any], params, extras: Dict[str, Any] = None) -> None:
    with open(path, 'wb') as f:
        f.write(encode_checkpoint(model_kind, hyperparams, params, extras))


def load_checkpoint(path, expected_kind: str = None) -> Checkpoint:
    with open(path, 'rb') as f:
        return decode_checkpoint(f.read(), expected_kind=expected_kind)


def peek_model_kind(path) -> str:
    return load_checkpoint(path).model_kind


def require_keys(section: Dict[str, Any], keys: Sequence[str], where: str) -> None:
    missing = [key for key in keys if key not in section]
    if missing:
        raise CheckpointError(f'checkpoint {where} are missing {", ".join(missing)}')


def restore_config(checkpoint: Checkpoint, config_type: Type[ConfigT], model_keys: Sequence[str] = ()) -> Tuple[Dict[str, Any], ConfigT]:
    """
    Split the stored hyperparams into the model's own constructor arguments (`model_keys`) and
    the config dataclass built from everything else.
    """
    hyperparams = dict(checkpoint.hyperparams)
    require_keys(hyperparams, model_keys, 'hyperparams')
    model_args = {key: hyperparams.pop(key) for key in model_keys}
    try:
        config = config_type(**hyperparams)
    except TypeError as exc:
        raise CheckpointError(f'{checkpoint.model_kind} checkpoint hyperparams do not fit {config_type.__name__}: {exc}') from None
    return model_args, config
