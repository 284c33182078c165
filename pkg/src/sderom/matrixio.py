"""Binary matrix files, delimited text output, and manifests.

All pipeline artifacts round-trip bitwise.  Matrices use a fixed binary
layout ("SPMR"): a 4-byte magic, a little-endian uint32 format version,
a uint8 kind tag, uint64 row and column counts, then the payload as
float64 little-endian in column-major order.  The kind tag names what
the matrix holds so a loader can reject category mistakes early.

CSV files are comma separated with a header row and '.' decimal marks;
floats are written with Python's shortest round-trip representation,
so parsing a written file recovers the exact doubles.

Every writer goes through a temporary file in the target directory and
an atomic rename, so readers never observe partial artifacts.
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np


__all__ = [
    "KIND_GENERIC",
    "KIND_BASIS",
    "KIND_SPECTRUM",
    "KIND_INCREMENTS",
    "KIND_TRAJECTORY",
    "write_matrix",
    "read_matrix",
    "write_csv",
    "read_csv",
    "atomic_write_text",
    "parse_keyvalue_text",
    "write_manifest",
    "sha256_file",
]


MAGIC = b"SPMR"
VERSION = 1

KIND_GENERIC = 0
KIND_BASIS = 1
KIND_SPECTRUM = 2
KIND_INCREMENTS = 3
KIND_TRAJECTORY = 4

_KINDS = (
    KIND_GENERIC,
    KIND_BASIS,
    KIND_SPECTRUM,
    KIND_INCREMENTS,
    KIND_TRAJECTORY,
)

_HEADER = struct.Struct("<4sIBQQ")


def _atomic_write_bytes(file: str | os.PathLike, payload: bytes) -> None:
    tmp = str(file) + ".tmp"
    with open(tmp, "wb") as handle:
        handle.write(payload)
    os.replace(tmp, str(file))


def atomic_write_text(file: str | os.PathLike, text: str) -> None:
    _atomic_write_bytes(file, text.encode("utf-8"))


def write_matrix(file: str | os.PathLike, matrix: np.ndarray, kind: int) -> None:
    """Write a 2-d float64 matrix in the fixed binary layout."""
    if kind not in _KINDS:
        raise ValueError(f"unknown matrix kind {kind}")
    matrix = np.asarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise ValueError("only 2-d matrices are stored")
    header = _HEADER.pack(MAGIC, VERSION, kind, matrix.shape[0], matrix.shape[1])
    _atomic_write_bytes(file, header + matrix.tobytes(order="F"))


def read_matrix(file: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a matrix and its kind tag, validating the header."""
    with open(file, "rb") as handle:
        blob = handle.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{file}: truncated header")
    magic, version, kind, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"{file}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{file}: unsupported format version {version}")
    if kind not in _KINDS:
        raise ValueError(f"{file}: unknown matrix kind {kind}")
    expected = _HEADER.size + rows * cols * 8
    if len(blob) != expected:
        raise ValueError(
            f"{file}: payload holds {len(blob) - _HEADER.size} bytes, "
            f"header promises {rows * cols * 8}"
        )
    flat = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    matrix = flat.reshape((rows, cols), order="F").astype(np.float64)
    return matrix, kind


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(file: str | os.PathLike, header: list[str], columns: list[np.ndarray]) -> None:
    """Write named columns as CSV with shortest round-trip floats."""
    if len(header) != len(columns):
        raise ValueError("one header entry per column")
    columns = [np.asarray(c) for c in columns]
    length = columns[0].shape[0]
    if any(c.shape != (length,) for c in columns):
        raise ValueError("columns must be 1-d and equally long")
    lines = [",".join(header)]
    for i in range(length):
        lines.append(",".join(_format_value(c[i]) for c in columns))
    atomic_write_text(file, "\n".join(lines) + "\n")


def read_csv(file: str | os.PathLike) -> tuple[list[str], dict[str, np.ndarray]]:
    with open(file, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines:
        raise ValueError(f"{file}: empty csv")
    header = lines[0].split(",")
    cells = [line.split(",") for line in lines[1:]]
    if any(len(row) != len(header) for row in cells):
        raise ValueError(f"{file}: ragged rows")
    data = {
        name: np.array([float(row[j]) for row in cells])
        for j, name in enumerate(header)
    }
    return header, data


def parse_keyvalue_text(file: str | os.PathLike) -> dict[str, str]:
    """Parse flat ``key = value`` text with '#' comments."""
    fields: dict[str, str] = {}
    with open(file, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{file}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ValueError(f"{file}:{lineno}: empty key")
            if key in fields:
                raise ValueError(f"{file}:{lineno}: duplicate key {key!r}")
            fields[key] = value.strip()
    return fields


def write_manifest(file: str | os.PathLike, entries: dict[str, object]) -> None:
    """Write a sorted key=value manifest (no timestamps, reruns match)."""
    lines = [f"{key} = {_format_value(entries[key])}" for key in sorted(entries)]
    atomic_write_text(file, "\n".join(lines) + "\n")


def sha256_file(file: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(file, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()
