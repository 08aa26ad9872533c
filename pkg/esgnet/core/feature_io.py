"""
Snippet feature file reading and writing.

Layout: magic ``DAVF``, then little-endian u32 version, u32 T, u32 D,
then T*D little-endian float32 values in row-major order.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .constants import (
    FEATURE_FILE_MAGIC,
    FEATURE_FILE_VERSION
)
from .exceptions import FeatureFormatError

_HEADER = struct.Struct('<4sIII')
_PAYLOAD_DTYPE = np.dtype('<f4')


def encode_features(features: np.ndarray) -> bytes:
    """
    Encodes a [T x D] feature matrix to bytes
    """
    features = np.asarray(features)
    if features.ndim != 2:
        raise FeatureFormatError(
            'features must be two dimensional, got shape {}'.format(
                features.shape), 0)
    rows, cols = features.shape
    header = _HEADER.pack(FEATURE_FILE_MAGIC, FEATURE_FILE_VERSION, rows, cols)
    payload = np.ascontiguousarray(features, dtype=_PAYLOAD_DTYPE).tobytes()
    return header + payload


def decode_features(data: bytes) -> np.ndarray:
    """
    Decodes a feature matrix, raising FeatureFormatError on malformed
    input
    """
    if len(data) < 4:
        raise FeatureFormatError('file too short for magic bytes', len(data))
    if data[:4] != FEATURE_FILE_MAGIC:
        raise FeatureFormatError(
            'bad magic bytes {!r}'.format(bytes(data[:4])), 0)
    if len(data) < _HEADER.size:
        raise FeatureFormatError('truncated header', len(data))

    _, version, rows, cols = _HEADER.unpack_from(data, 0)
    if version != FEATURE_FILE_VERSION:
        raise FeatureFormatError(
            'unsupported feature file version {}'.format(version), 4)

    expected = rows * cols * _PAYLOAD_DTYPE.itemsize
    actual = len(data) - _HEADER.size
    if actual != expected:
        raise FeatureFormatError(
            'header claims {}x{} values ({} bytes) but payload has {} '
            'bytes'.format(rows, cols, expected, actual),
            _HEADER.size + min(actual, expected))

    values = np.frombuffer(data, dtype=_PAYLOAD_DTYPE, count=rows * cols,
                           offset=_HEADER.size)
    return values.astype(np.float32).reshape(rows, cols)


def save_features(features: np.ndarray, path: Union[str, Path]):
    """
    Writes a [T x D] feature matrix to ``path``
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(encode_features(features))


def load_features(path: Union[str, Path]) -> np.ndarray:
    """
    Reads a [T x D] float32 feature matrix from ``path``
    """
    with open(path, 'rb') as f:
        return decode_features(f.read())
