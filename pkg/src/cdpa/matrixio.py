"""Matrix file input/output.

Two on-disk formats are supported:

* a raw little-endian binary format: 4-byte magic ``CDPM``, uint32 row
  count, uint32 column count, then the float64 payload in column-major
  order;
* delimited text (CSV or TSV) with rows as variables and columns as
  samples, an optional header row, and an optional leading row-name
  column.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"CDPM"
_HEADER = struct.Struct("<4sII")


def write_matrix_binary(path, a: np.ndarray) -> None:
    """Write ``a`` to ``path`` in the binary matrix format."""
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if a.ndim != 2:
        raise InputError(f"expected a 2-d array, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0], a.shape[1]))
        fh.write(np.asfortranarray(a).tobytes(order="F"))


def read_matrix_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise InputError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise InputError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise InputError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f8")
    return data.reshape((rows, cols), order="F").copy()


def _parse_text(path) -> np.ndarray:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines()]
    rows: list[list[float]] = []
    delim = None
    header_skipped = False
    name_column = None
    ncols = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if delim is None:
            delim = "\t" if "\t" in line else ","
        tokens = [t.strip() for t in line.split(delim)]
        if not header_skipped and not rows:
            # a first row whose trailing fields are not numeric is a header
            tail = tokens[1:] if len(tokens) > 1 else tokens
            if not all(_is_number(t) for t in tail):
                header_skipped = True
                continue
        if name_column is None:
            name_column = not _is_number(tokens[0])
        vals = tokens[1:] if name_column else tokens
        try:
            row = [float(v) for v in vals]
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        if ncols is None:
            ncols = len(row)
        elif len(row) != ncols:
            raise InputError(
                f"{path}:{lineno}: expected {ncols} values, found {len(row)}"
            )
        rows.append(row)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """Read a matrix, sniffing the binary magic before falling back to text."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return read_matrix_binary(path)
    return _parse_text(path)
