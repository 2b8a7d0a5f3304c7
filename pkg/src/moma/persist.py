"""Versioned binary container for trained router weights.

Layout (all little-endian)::

    magic    4 bytes   e.g. b"MOMA"
    version  u32
    header   fixed struct, defined per magic
    arrays   float64, row-major, in a fixed order
    crc32    u32 over every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError

_U32 = struct.Struct("<I")


def pack(magic: bytes, version: int, header_fmt: str, header: Sequence, arrays: Sequence[np.ndarray]) -> bytes:
    assert len(magic) == 4
    parts = [magic, _U32.pack(version), struct.pack("<" + header_fmt, *header)]
    for arr in arrays:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def unpack(blob: bytes, magic: bytes, version: int, header_fmt: str, shapes_from_header):
    """Inverse of :func:`pack`.

    ``shapes_from_header`` maps the decoded header tuple to the list of
    array shapes that follow it.
    """
    hdr = struct.Struct("<" + header_fmt)
    if len(blob) < 8 + hdr.size + 4:
        raise DataFormatError("file too short")
    if blob[:4] != magic:
        raise DataFormatError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    body, (crc,) = blob[:-4], _U32.unpack(blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise DataFormatError("checksum mismatch (corrupted or truncated file)")
    (found_version,) = _U32.unpack_from(blob, 4)
    if found_version != version:
        raise DataFormatError(f"unsupported format version {found_version}")
    header = hdr.unpack_from(blob, 8)
    offset = 8 + hdr.size
    try:
        shapes = shapes_from_header(header)
    except ValueError as exc:
        raise DataFormatError(f"bad header: {exc}") from None
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape))
        end = offset + 8 * n
        if end > len(body):
            raise DataFormatError("payload shorter than header declares")
        arrays.append(np.frombuffer(body, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(shape))
        offset = end
    if offset != len(body):
        raise DataFormatError("trailing bytes after payload")
    return header, arrays


def write(path, blob: bytes) -> None:
    Path(path).write_bytes(blob)


def read(path) -> bytes:
    return Path(path).read_bytes()
