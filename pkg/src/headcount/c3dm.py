"""The C3DM binary density-map format.

Layout (little-endian, no padding, no checksum):

    magic   4 bytes  b"C3DM"
    version u8       1
    height  u32
    width   u32
    norm    f32      norm_factor
    values  height*width f32, row-major

Checksumming is left to the archive layer.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .density import DensityMap
from .errors import FormatError

MAGIC = b"C3DM"
VERSION = 1
_HEADER = struct.Struct("<4sBIIf")


class C3DMFormatError(FormatError):
    """The file does not conform to the C3DM layout."""


def dumps_c3dm(dmap: DensityMap) -> bytes:
    """Serialize a density map to C3DM bytes (values cast to float32)."""
    header = _HEADER.pack(MAGIC, VERSION, dmap.height, dmap.width, dmap.norm_factor)
    return header + np.ascontiguousarray(dmap.values, dtype="<f4").tobytes()


def loads_c3dm(data: bytes) -> DensityMap:
    """Parse C3DM bytes; values come back as float64."""
    if len(data) < _HEADER.size:
        raise C3DMFormatError(
            f"truncated header: file ends at byte offset {len(data)}, "
            f"need {_HEADER.size}"
        )
    magic, version, height, width, norm = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise C3DMFormatError(f"bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise C3DMFormatError(f"unsupported version {version} at byte offset 4")
    if height < 1 or width < 1:
        raise C3DMFormatError(f"non-positive dimensions {height}x{width}")
    if not norm > 0.0:  # also rejects NaN
        raise C3DMFormatError(f"invalid norm_factor {norm!r} at byte offset 13")
    expected = _HEADER.size + 4 * height * width
    if len(data) != expected:
        raise C3DMFormatError(
            f"value block ends at byte offset {len(data)}, expected {expected} "
            f"for a {height}x{width} map"
        )
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(height, width)
    return DensityMap(values.astype(np.float64), norm_factor=float(norm))


def save_c3dm(dmap: DensityMap, path: str | Path) -> None:
    Path(path).write_bytes(dumps_c3dm(dmap))


def load_c3dm(path: str | Path) -> DensityMap:
    return loads_c3dm(Path(path).read_bytes())
