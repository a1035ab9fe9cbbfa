"""Matrix files.

CSV: one row per observation, header ``x1,...,xp``, values written with 17
significant digits so they read back exactly.

Binary: 16-byte header (magic ``CHL1``, then little-endian u32 ``n``, ``p``,
``flags``; flag bit 0 = column-major) followed by ``n*p`` little-endian
binary64 values.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .errors import MatrixFormatError
from .randmat import DataMatrix

MAGIC = b"CHL1"
HEADER = struct.Struct("<4sIII")
FLAG_COLUMN_MAJOR = 1


def write_bin(path, values: np.ndarray, column_major: bool = True) -> None:
    values = np.asarray(values, dtype="<f8")
    n, p = values.shape
    flags = FLAG_COLUMN_MAJOR if column_major else 0
    order = "F" if column_major else "C"
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, n, p, flags))
        fh.write(values.tobytes(order=order))


def read_bin(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise MatrixFormatError(f"{path}: file shorter than the 16-byte header")
    magic, n, p, flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = HEADER.size + 8 * n * p
    if len(data) != expected:
        raise MatrixFormatError(f"{path}: expected {expected} bytes for n={n}, p={p}, got {len(data)}")
    order = "F" if flags & FLAG_COLUMN_MAJOR else "C"
    flat = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    return flat.reshape((n, p), order=order).astype(np.float64)


def write_csv(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float)
    p = values.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"x{j + 1}" for j in range(p)) + "\n")
        for row in values:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def read_csv(path) -> np.ndarray:
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MatrixFormatError(f"{path}: empty CSV file") from None
    p = len(header)
    if header != [f"x{j + 1}" for j in range(p)]:
        raise MatrixFormatError(f"{path}: header must be x1,...,x{p}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != p:
            raise MatrixFormatError(f"{path}:{lineno}: expected {p} fields, got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise MatrixFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise MatrixFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def detect_format(path, fmt=None) -> str:
    if fmt:
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".bin", ".chl"):
        return "bin"
    # sniff
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except FileNotFoundError:
        return "bin"
    return "bin" if head == MAGIC else "csv"


def load_matrix(path, fmt=None) -> DataMatrix:
    try:
        fmt = detect_format(path, fmt)
        values = read_csv(path) if fmt == "csv" else read_bin(path)
    except OSError as exc:
        raise MatrixFormatError(f"{path}: {exc.strerror or exc}") from None
    return DataMatrix.external(values, source=str(path))


def save_matrix(path, matrix: DataMatrix, fmt=None) -> str:
    fmt = fmt or ("csv" if Path(path).suffix.lower() == ".csv" else "bin")
    if fmt == "csv":
        write_csv(path, matrix.values)
    else:
        write_bin(path, matrix.values)
    return fmt


def read_vector(path) -> np.ndarray:
    """Read a vector from a CSV/text file: one value per line, or one row of values."""
    text = Path(path).read_text()
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        for tok in line.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                out.append(float(tok))
            except ValueError:
                if not out:  # header line
                    continue
                raise MatrixFormatError(f"{path}: bad number {tok!r}") from None
    if not out:
        raise MatrixFormatError(f"{path}: no values")
    return np.array(out)
