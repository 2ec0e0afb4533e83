"""Bit-exact binary container for 1-D and 2-D grids.

Layout: magic "DIFG", version u32, ndim u32 (1 or 2), one u32 per
dimension, a dtype tag u8 (1 = f32, 2 = f64), then the row-major
little-endian payload. Round-trips preserve every bit; masks and label
maps are stored as f32 with exact small-integer values.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["GridFormatError", "write_grid", "read_grid", "GRID_MAGIC"]

GRID_MAGIC = b"DIFG"
GRID_VERSION = 1

_TAG_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_KIND_TO_TAG = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}

# Refuse absurd headers before allocating: 2^31 elements is far beyond any
# grid this engine produces.
_MAX_ELEMENTS = 2**31


class GridFormatError(Exception):
    """Raised for malformed grid files."""


def write_grid(path, grid: np.ndarray) -> None:
    """Write a float32 or float64 grid; the dtype is taken from the array."""
    grid = np.asarray(grid)
    if grid.ndim not in (1, 2):
        raise GridFormatError(f"grids must be 1-D or 2-D, got ndim={grid.ndim}")
    tag = _KIND_TO_TAG.get(grid.dtype)
    if tag is None:
        raise GridFormatError(
            f"unsupported dtype {grid.dtype}; convert to float32 or float64"
        )
    if any(d >= 2**32 for d in grid.shape) or grid.size >= _MAX_ELEMENTS:
        raise GridFormatError(f"grid dimensions {grid.shape} overflow the format")
    header = struct.pack("<4sII", GRID_MAGIC, GRID_VERSION, grid.ndim)
    dims = struct.pack(f"<{grid.ndim}I", *grid.shape)
    payload = np.ascontiguousarray(grid, dtype=_TAG_TO_DTYPE[tag]).tobytes()
    Path(path).write_bytes(header + dims + struct.pack("<B", tag) + payload)


def read_grid(path) -> np.ndarray:
    """Read a grid file, returning an array of the stored dtype."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise GridFormatError(f"{path}: file shorter than the fixed header")
    magic, version, ndim = struct.unpack_from("<4sII", raw, 0)
    if magic != GRID_MAGIC:
        raise GridFormatError(f"{path}: bad magic {magic!r}")
    if version != GRID_VERSION:
        raise GridFormatError(f"{path}: unsupported version {version}")
    if ndim not in (1, 2):
        raise GridFormatError(f"{path}: invalid ndim {ndim}")
    offset = 12
    if len(raw) < offset + 4 * ndim + 1:
        raise GridFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", raw, offset)
    offset += 4 * ndim
    (tag,) = struct.unpack_from("<B", raw, offset)
    offset += 1
    dtype = _TAG_TO_DTYPE.get(tag)
    if dtype is None:
        raise GridFormatError(f"{path}: unknown dtype tag {tag}")
    n_elements = 1
    for d in dims:
        n_elements *= d
    if n_elements >= _MAX_ELEMENTS:
        raise GridFormatError(f"{path}: dimensions {dims} overflow")
    expected = n_elements * dtype.itemsize
    actual = len(raw) - offset
    if actual < expected:
        raise GridFormatError(
            f"{path}: truncated payload ({actual} of {expected} bytes)"
        )
    if actual > expected:
        raise GridFormatError(f"{path}: {actual - expected} trailing bytes")
    data = np.frombuffer(raw, dtype=dtype, count=n_elements, offset=offset)
    return data.reshape(dims).copy()
