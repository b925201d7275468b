"""Cloud file formats.

Binary (``BRD1``): the 4-byte magic ``b"BRD1"``, then little-endian ``u32``
row count ``n`` and ``u32`` dimension ``d``, then ``n * d`` little-endian
float32 values in row-major order. Nothing may follow the payload.

TSV: one row per line, tab-separated reals, ``#`` starts a comment.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadHeader, TruncatedPayload
from .geometry import normalize_rows

MAGIC = b"BRD1"
_HEADER = struct.Struct("<4sII")


def detect_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return "binary" if head == MAGIC else "tsv"


def read_binary(path) -> np.ndarray:
    """Raw float32 matrix from a BRD1 file."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise BadHeader(f"{path}: file too short for a BRD1 header")
    magic, n, d = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadHeader(f"{path}: bad magic {magic!r}")
    if n < 1 or d < 2:
        raise BadHeader(f"{path}: header declares n={n}, d={d}; need n >= 1 and d >= 2")
    expected = _HEADER.size + 4 * n * d
    if len(buf) < expected:
        rows = (len(buf) - _HEADER.size) // (4 * d)
        raise TruncatedPayload(f"{path}: header declares {n} rows but payload holds {rows}")
    if len(buf) > expected:
        raise BadHeader(f"{path}: {len(buf) - expected} bytes beyond the declared {n}x{d} payload")
    return np.frombuffer(buf, dtype="<f4", count=n * d, offset=_HEADER.size).reshape(n, d)


def write_binary(path, data) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("data must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_tsv(path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter="\t", ndmin=2, dtype=np.float64, comments="#")
    except ValueError as exc:
        raise BadHeader(f"{path}: {exc}") from None
    if arr.size == 0:
        raise BadHeader(f"{path}: no rows")
    if arr.shape[1] < 2:
        raise BadHeader(f"{path}: rows need at least 2 columns")
    return arr


def write_tsv(path, data) -> None:
    np.savetxt(path, np.asarray(data, dtype=np.float64), delimiter="\t", fmt="%.17g")


def read_matrix(path) -> np.ndarray:
    """Raw matrix from either format, chosen by sniffing the magic bytes."""
    return read_binary(path) if detect_format(path) == "binary" else read_tsv(path)


def read_cloud(path, normalize: bool = True) -> np.ndarray:
    """Read a cloud as float64, unit-normalizing rows unless ``normalize`` is False."""
    raw = read_matrix(path)
    return normalize_rows(raw) if normalize else raw.astype(np.float64)


def write_cloud(path, data, fmt: str = "binary") -> None:
    if fmt == "binary":
        write_binary(path, data)
    elif fmt == "tsv":
        write_tsv(path, data)
    else:
        raise ValueError(f"unknown format {fmt!r}")
