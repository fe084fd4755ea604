"""File formats: numeric CSV (rows = time points) and JSON artifacts."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import DomainError

__all__ = [
    "DataFileError",
    "read_csv_matrix",
    "write_csv_matrix",
    "read_observations",
    "write_observations",
    "data_checksum",
    "write_json",
    "read_json",
    "library_version",
    "ensure_dir",
]


class DataFileError(DomainError):
    """A data file is missing, ragged or has a non-numeric cell."""


def library_version() -> str:
    from . import __version__
    return __version__


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def read_csv_matrix(path) -> tuple[np.ndarray, list | None]:
    """Read a numeric CSV. A first row with any non-numeric cell is a header.

    Returns ``(M, header)`` with ``M`` shaped as stored (rows x columns).
    Errors name the file and the 1-based row/column of the problem.
    """
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise DataFileError(f"{path}: header but no data rows")
    width = len(header) if header is not None else len(rows[0])
    offset = 2 if header is not None else 1
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataFileError(
                f"{path}: row {i + offset} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DataFileError(
                    f"{path}: non-numeric value {cell.strip()!r} at row {i + offset}, column {j + 1}"
                ) from None
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise DataFileError(f"{path}: non-finite value at row {i + offset}, column {j + 1}")
    return out, header


def write_csv_matrix(path, M, header=None) -> None:
    """Write ``M`` row-major with 17 significant digits and LF endings."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in M:
            w.writerow([f"{v:.17g}" for v in row])


def read_observations(path) -> np.ndarray:
    """Data file (N rows x D columns) as the internal ``D x N`` matrix."""
    M, _ = read_csv_matrix(path)
    return M.T.copy()


def write_observations(path, Y, prefix: str = "y") -> None:
    """Inverse of :func:`read_observations`, with a ``y1, y2, ...`` header."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    write_csv_matrix(path, Y.T, header=[f"{prefix}{i + 1}" for i in range(Y.shape[0])])


def data_checksum(Y) -> str:
    """SHA-256 of the little-endian float64 bytes of a ``D x N`` matrix."""
    Y = np.ascontiguousarray(np.asarray(Y, dtype="<f8"))
    h = hashlib.sha256()
    h.update(str(Y.shape).encode())
    h.update(Y.tobytes())
    return h.hexdigest()


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"{path}: file not found")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON ({exc})") from exc


def ensure_dir(path) -> Path:
    """Create an output directory, raising ``OSError`` that names it."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc.strerror}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path
