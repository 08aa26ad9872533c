"""
Checkpoint reading and writing.

Layout, little-endian: magic ``DAVC``, u32 metadata length, UTF-8 JSON
metadata, u32 record count, then per record: u32 name length, name,
u32 rank, rank x u32 dims, float32 payload in row-major order.
"""

import json
import os
import struct
from dataclasses import (
    dataclass,
    field
)
from pathlib import Path
from typing import (
    Dict,
    Optional
)

import numpy as np

from ..tensor.nn import Module
from .config import ModelConfig
from .constants import CHECKPOINT_MAGIC
from .exceptions import (
    FeatureFormatError,
    VersionError
)
from .logger import Logger
from .meta import PACKAGE_METADATA_PARSER

ADAM_M_SUFFIX = '#adam_m'
ADAM_V_SUFFIX = '#adam_v'

_U32 = struct.Struct('<I')
_PAYLOAD_DTYPE = np.dtype('<f4')


@dataclass
class Checkpoint:
    """
    Decoded checkpoint contents
    """
    metadata: Dict
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def step(self) -> int:
        """
        Returns the number of optimizer steps taken
        """
        return int(self.metadata.get('step', 0))

    @property
    def epoch(self) -> int:
        """
        Returns the number of completed epochs
        """
        return int(self.metadata.get('epoch', 0))

    def model_config(self) -> ModelConfig:
        """
        Returns the model configuration stored in the checkpoint
        """
        return ModelConfig.from_json(self.metadata['model'])


def _read_u32(data: bytes, offset: int):
    if offset + _U32.size > len(data):
        raise FeatureFormatError('truncated checkpoint', offset)
    return _U32.unpack_from(data, offset)[0], offset + _U32.size


def collect_tensors(model: Module) -> Dict[str, np.ndarray]:
    """
    Returns parameters and their Adam moments keyed by record name
    """
    res = {}
    for name, param in model.state().items():
        res[name] = param.data
        res[name + ADAM_M_SUFFIX] = param.adam_m
        res[name + ADAM_V_SUFFIX] = param.adam_v
    return res


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    """
    Serializes a checkpoint to bytes
    """
    header = json.dumps(checkpoint.metadata, sort_keys=True).encode('utf-8')
    parts = [CHECKPOINT_MAGIC, _U32.pack(len(header)), header,
             _U32.pack(len(checkpoint.tensors))]
    for name, values in checkpoint.tensors.items():
        encoded = name.encode('utf-8')
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(values.ndim))
        parts.extend(_U32.pack(dim) for dim in values.shape)
        parts.append(np.ascontiguousarray(values,
                                          dtype=_PAYLOAD_DTYPE).tobytes())
    return b''.join(parts)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Parses checkpoint bytes, raising FeatureFormatError on malformed
    input
    """
    if data[:4] != CHECKPOINT_MAGIC:
        raise FeatureFormatError('bad checkpoint magic', 0)
    header_length, offset = _read_u32(data, 4)
    if offset + header_length > len(data):
        raise FeatureFormatError('truncated checkpoint metadata', offset)
    try:
        metadata = json.loads(data[offset:offset + header_length]
                              .decode('utf-8'))
    except ValueError as e:
        raise FeatureFormatError('unreadable checkpoint metadata',
                                 offset) from e
    offset += header_length

    count, offset = _read_u32(data, offset)
    tensors = {}
    for _ in range(count):
        name_length, offset = _read_u32(data, offset)
        name = data[offset:offset + name_length].decode('utf-8')
        offset += name_length
        rank, offset = _read_u32(data, offset)
        shape = []
        for _ in range(rank):
            dim, offset = _read_u32(data, offset)
            shape.append(dim)
        size = int(np.prod(shape)) if shape else 1
        nbytes = size * _PAYLOAD_DTYPE.itemsize
        if offset + nbytes > len(data):
            raise FeatureFormatError(
                'truncated payload of {}'.format(name), offset)
        tensors[name] = np.frombuffer(
            data, dtype=_PAYLOAD_DTYPE, count=size,
            offset=offset).astype(np.float32).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise FeatureFormatError('trailing bytes after checkpoint', offset)
    return Checkpoint(metadata, tensors)


def build_metadata(cfg: ModelConfig, **extra) -> Dict:
    """
    Returns the metadata every checkpoint carries, plus ``extra``
    """
    res = {
        'format_version':
            PACKAGE_METADATA_PARSER.get_checkpoint_format_version(),
        'version': PACKAGE_METADATA_PARSER.get_version(),
        'model': cfg.to_json(),
    }
    res.update(extra)
    return res


def save_checkpoint(path: Path,
                    model: Module,
                    cfg: ModelConfig,
                    **extra) -> Checkpoint:
    """
    Writes the model parameters, Adam state and metadata to ``path``,
    replacing any previous file atomically
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint = Checkpoint(build_metadata(cfg, **extra),
                            collect_tensors(model))
    tmp = path.with_suffix(path.suffix + '.tmp')
    with open(tmp, 'wb') as f:
        f.write(encode_checkpoint(checkpoint))
    os.replace(tmp, path)
    Logger.instance().log_message_json({
        'type': Logger.CHECKPOINT,
        'path': str(path),
        'step': checkpoint.metadata.get('step'),
    })
    return checkpoint


def load_checkpoint(path: Path) -> Checkpoint:
    """
    Reads a checkpoint file
    """
    with open(path, 'rb') as f:
        return decode_checkpoint(f.read())


def check_compatible(checkpoint: Checkpoint,
                     cfg: Optional[ModelConfig] = None):
    """
    Raises VersionError if the checkpoint was written by an incompatible
    format or for a different model configuration
    """
    expected = PACKAGE_METADATA_PARSER.get_checkpoint_format_version()
    found = checkpoint.metadata.get('format_version')
    if found != expected:
        raise VersionError(
            'checkpoint format version {} is not supported (expected {})'
            .format(found, expected))
    if cfg is not None and checkpoint.metadata.get('model') != \
            cfg.to_json():
        stored = checkpoint.metadata.get('model', {})
        changed = sorted(k for k in set(stored) | set(cfg.to_json())
                         if stored.get(k) != cfg.to_json().get(k))
        raise VersionError(
            'checkpoint was written for a different model config '
            '(differs in: {})'.format(', '.join(changed)))


def restore(model: Module, checkpoint: Checkpoint,
            cfg: Optional[ModelConfig] = None):
    """
    Copies parameters and Adam moments from a checkpoint into ``model``
    """
    check_compatible(checkpoint, cfg)
    for name, param in model.state().items():
        if name not in checkpoint.tensors:
            raise VersionError('checkpoint has no parameter {}'.format(name))
        values = checkpoint.tensors[name]
        if values.shape != param.shape:
            raise VersionError(
                'parameter {} has shape {} in the checkpoint but {} in the '
                'model'.format(name, values.shape, param.shape))
        dtype = param.dtype
        param.data = values.astype(dtype)
        param.adam_m = checkpoint.tensors.get(
            name + ADAM_M_SUFFIX, np.zeros(param.shape)).astype(dtype)
        param.adam_v = checkpoint.tensors.get(
            name + ADAM_V_SUFFIX, np.zeros(param.shape)).astype(dtype)
        param.step_count = checkpoint.step
        param.zero_grad()
