# -*- coding: utf-8 -*-

"""
Reading and writing the .avol volume format.

Layout (little-endian):

<magic "AVOL" (4s)><version (B)><dtype (B)><ndim (B)><reserved zero (B)>
<ndim extents (I each)><payload in C order>

dtype 1 is float32, dtype 2 is uint8.
"""

from __future__ import annotations

__all__ = ['read_volume', 'write_volume', 'encode_volume', 'decode_volume',
           'MAGIC', 'VERSION', 'DTYPES']

import logging
import struct
from pathlib import Path

import numpy as np

from ..errors import VolumeFormatError

logger = logging.getLogger(__name__)

MAGIC = b"AVOL"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("u1")}
_CODES = {dt: code for code, dt in DTYPES.items()}

_header = struct.Struct("<4sBBBB")


def encode_volume(volume: np.ndarray) -> bytes:
    """
    :raises VolumeFormatError: for unsupported dtypes or ranks
    """
    dtype = volume.dtype.newbyteorder("<")
    if dtype not in _CODES:
        raise VolumeFormatError("bad-dtype", f"unsupported dtype {volume.dtype}; use float32 or uint8")
    if not 1 <= volume.ndim <= 255 or any(e < 1 for e in volume.shape):
        raise VolumeFormatError("bad-dims", f"unsupported shape {volume.shape}")
    header = _header.pack(MAGIC, VERSION, _CODES[dtype], volume.ndim, 0)
    extents = struct.pack(f"<{volume.ndim}I", *volume.shape)
    payload = np.ascontiguousarray(volume, dtype=dtype).tobytes(order="C")
    return header + extents + payload


def decode_volume(data: bytes) -> np.ndarray:
    """
    :raises VolumeFormatError: with code bad-magic, bad-version, bad-dtype,
                               bad-dims or payload-short
    """
    if len(data) < _header.size:
        raise VolumeFormatError("payload-short", f"payload short: {len(data)} bytes is too short for a header")
    magic, version, dtype_code, ndim, reserved = _header.unpack_from(data)
    if magic != MAGIC:
        raise VolumeFormatError("bad-magic", f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise VolumeFormatError("bad-version", f"unsupported version {version}")
    if dtype_code not in DTYPES:
        raise VolumeFormatError("bad-dtype", f"unknown dtype code {dtype_code}")
    if ndim == 0 or reserved != 0:
        raise VolumeFormatError("bad-dims", f"invalid rank byte {ndim} / reserved byte {reserved}")
    offset = _header.size
    if len(data) < offset + 4 * ndim:
        raise VolumeFormatError("payload-short", "payload short: extents truncated")
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    if any(e == 0 for e in shape):
        raise VolumeFormatError("bad-dims", f"zero extent in {shape}")
    offset += 4 * ndim
    dtype = DTYPES[dtype_code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(data) - offset < expected:
        raise VolumeFormatError("payload-short",
                                f"payload short: expected {expected} bytes, found {len(data) - offset}")
    volume = np.frombuffer(data, dtype=dtype, count=expected // dtype.itemsize, offset=offset)
    return volume.reshape(shape).astype(dtype.newbyteorder("="), copy=True)


def read_volume(path: Path) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as oe:
        logger.error("Unable to read volume %s" % path)
        raise VolumeFormatError("io", f"unable to read {path}: {oe}") from oe
    return decode_volume(data)


def write_volume(path: Path, volume: np.ndarray) -> None:
    data = encode_volume(volume)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(data)
    except OSError as oe:
        logger.error("Encountered %s writing volume %s" % (type(oe).__name__, path))
        raise VolumeFormatError("io", f"unable to write {path}: {oe}") from oe
