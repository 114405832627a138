"""Parameter checkpoints.

Byte layout::

    8 bytes   magic  b"MGTCKPT1"
    4 bytes   header length H, unsigned little-endian
    H bytes   header, UTF-8 JSON with sorted keys:
              {"version": 1, "config": {...}, "config_hash": "...", "seed": int,
               "target_stats": {"mean": [...], "std": [...]} | null,
               "arrays": [{"name": str, "shape": [int, ...]}, ...]}
    rest      every array of "arrays" in order, flattened row-major,
              little-endian 64-bit floats

Arrays are the model parameters in creation order followed by the
batchnorm running statistics.
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mgt.config import MGTConfig, model_config_from_dict
from mgt.exceptions import CheckpointException, ConfigException
from mgt.model import MGT

logger = logging.getLogger(__name__)

MAGIC = b'MGTCKPT1'
VERSION = 1
FLOAT = np.dtype('<f8')


@dataclass(frozen=True, eq=False)
class Checkpoint:
    config: MGTConfig
    arrays: dict
    config_hash: str = ''
    seed: int = 0
    target_stats: dict | None = None


def encode_checkpoint(model: MGT, config_hash: str = '', seed: int = 0, target_stats: dict | None = None) -> bytes:
    arrays = list(model.store.arrays())
    header = {
        'version': VERSION,
        'config': model.cfg.to_dict(),
        'config_hash': config_hash,
        'seed': seed,
        'target_stats': target_stats,
        'arrays': [{'name': name, 'shape': list(array.shape)} for name, array in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    body = b''.join(np.ascontiguousarray(array, dtype=FLOAT).tobytes() for _, array in arrays)
    return MAGIC + struct.pack('<I', len(header_bytes)) + header_bytes + body


def save_checkpoint(path: Path | str, model: MGT, config_hash: str = '', seed: int = 0,
                    target_stats: dict | None = None):
    Path(path).write_bytes(encode_checkpoint(model, config_hash, seed, target_stats))
    logger.debug('checkpoint written to %s', path)


def decode_checkpoint(data: bytes) -> Checkpoint:
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointException('not a checkpoint (bad magic)', 'byte 0')

    offset = len(MAGIC)
    if len(data) < offset + 4:
        raise CheckpointException('truncated header length', f'byte {offset}')

    (length,) = struct.unpack_from('<I', data, offset)
    offset += 4
    try:
        header = json.loads(data[offset:offset + length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as error:
        raise CheckpointException(f'unreadable header ({error})', f'byte {offset}') from error

    if header.get('version') != VERSION:
        raise CheckpointException(f'unsupported version {header.get("version")!r}', 'header.version')

    try:
        config = model_config_from_dict(header['config'], 'checkpoint.config')
    except KeyError as error:
        raise CheckpointException('header has no config', 'header') from error
    except ConfigException as error:
        raise CheckpointException(f'config echo is invalid ({error})', 'header.config') from error

    offset += length
    arrays = {}
    for entry in header.get('arrays', []):
        shape = tuple(entry['shape'])
        size = int(np.prod(shape, dtype=np.int64)) * FLOAT.itemsize
        if offset + size > len(data):
            raise CheckpointException('truncated array data', f'param {entry["name"]}')

        if size == 0:
            arrays[entry['name']] = np.zeros(shape)
            continue

        arrays[entry['name']] = np.frombuffer(data, dtype=FLOAT, count=size // FLOAT.itemsize,
                                              offset=offset).reshape(shape).astype(np.float64)
        offset += size

    if offset != len(data):
        raise CheckpointException(f'{len(data) - offset} trailing bytes', f'byte {offset}')

    return Checkpoint(
        config=config,
        arrays=arrays,
        config_hash=header.get('config_hash', ''),
        seed=header.get('seed', 0),
        target_stats=header.get('target_stats'),
    )


def load_checkpoint(path: Path | str) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as error:
        raise CheckpointException(f'cannot read checkpoint ({error.strerror})', str(path)) from error

    return decode_checkpoint(data)


def restore_model(checkpoint: Checkpoint) -> MGT:
    """Rebuild the model from the config echo and overwrite its arrays."""
    model = MGT(checkpoint.config)
    model.store.load_arrays(checkpoint.arrays)
    return model
