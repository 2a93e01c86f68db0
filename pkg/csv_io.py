"""
*****
Purpose: CSV and key-value file I/O for the command line and benchmarks

Matrices are plain comma-separated numbers with an optional header line
(detected when the first line does not parse as numbers). Floats are
written with repr() so every value reads back bit-identical. Index files
are 1-based.

Parameters:
None

Returns:
Reader and writer functions
*****
"""

import csv
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from core_types import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _is_numeric_row(fields: Sequence[str]) -> bool:
    try:
        for field in fields:
            float(field)
    except ValueError:
        return False
    return True


def read_matrix(path: PathLike) -> np.ndarray:
    """
    *****
    Purpose: Read a numeric CSV matrix

    Parameters:
    PathLike path: CSV file, one observation per line, optional header line

    Returns:
    np.ndarray: n x p float matrix

    Errors:
    FileNotFoundError / OSError if the file cannot be read
    DataError on an empty file, ragged rows or a non-numeric cell (names row and column)
    *****
    """
    with open(path, newline='') as f:
        rows = [(number, row) for number, row in enumerate(csv.reader(f), start=1)
                if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DataError(f"{path}: no data")
    if not _is_numeric_row(rows[0][1]):
        logger.debug(f"{path}: treating line {rows[0][0]} as a header")
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data")

    width = len(rows[0][1])
    values = []
    for line, row in rows:
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} column(s), expected {width}")
        parsed = []
        for column, cell in enumerate(row, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: row {line}, column {column}: cannot parse '{cell.strip()}'")
        values.append(parsed)
    return np.array(values, dtype=float)


def _format(value: float) -> str:
    return repr(float(value))


def write_matrix(path: PathLike, matrix: np.ndarray, header: Sequence[str] = None):
    """Write a matrix (a vector becomes one column) with round-trip float formatting."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        if header is not None:
            writer.writerow(header)
        for row in matrix:
            writer.writerow([_format(v) for v in row])


def write_index(path: PathLike, indices: Iterable, header: Sequence[str] = None):
    """
    *****
    Purpose: Write 0-based row indices or (row, column) pairs as 1-based CSV

    Parameters:
    PathLike path: output file
    Iterable indices: ints or (int, int) pairs, 0-based
    Sequence[str] header: optional header line

    Returns:
    None
    *****
    """
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        if header is not None:
            writer.writerow(header)
        for index in indices:
            if isinstance(index, (tuple, list)):
                writer.writerow([int(i) + 1 for i in index])
            else:
                writer.writerow([int(index) + 1])


def read_index(path: PathLike) -> List[int]:
    """Read a 1-based row-index file into sorted 0-based indices."""
    with open(path, newline='') as f:
        cells = [row[0].strip() for row in csv.reader(f) if row and row[0].strip()]
    if cells and not _is_numeric_row(cells[:1]):
        cells = cells[1:]
    indices = []
    for line, cell in enumerate(cells, start=1):
        try:
            value = int(float(cell))
        except ValueError:
            raise DataError(f"{path}: cannot parse index '{cell}' on entry {line}")
        if value < 1:
            raise DataError(f"{path}: indices are 1-based, got {value}")
        indices.append(value - 1)
    return sorted(set(indices))


def read_key_values(path: PathLike) -> Dict[str, str]:
    """
    *****
    Purpose: Parse a 'key = value' configuration file

    Blank lines and lines starting with '#' are skipped; '-' in keys is
    read as '_' so flag spellings work.

    Parameters:
    PathLike path: configuration file

    Returns:
    Dict[str, str]: raw string values by key

    Errors:
    DataError on a line without '='
    *****
    """
    values = {}
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise DataError(f"{path}: line {number} is not 'key = value': {line}")
            key, value = line.split('=', 1)
            values[key.strip().replace('-', '_')] = value.strip()
    return values


def write_json(path: PathLike, payload: dict):
    """Write a summary dictionary as indented JSON."""
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2)


def format_markdown(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Aligned markdown table; floats keep four decimals."""
    def cell(value):
        if isinstance(value, float):
            return f"{value:.4f}"
        return "" if value is None else str(value)

    body = [[cell(v) for v in row] for row in rows]
    widths = [max([len(c)] + [len(row[i]) for row in body]) for i, c in enumerate(columns)]
    lines = ["| " + " | ".join(c.ljust(w) for c, w in zip(columns, widths)) + " |",
             "| " + " | ".join("-" * w for w in widths) + " |"]
    lines += ["| " + " | ".join(v.ljust(w) for v, w in zip(row, widths)) + " |" for row in body]
    return "\n".join(lines) + "\n"


def write_table(path: PathLike, columns: Sequence[str], rows: Sequence[Sequence], fmt: str = "csv"):
    """
    *****
    Purpose: Write a result table as CSV or aligned markdown

    Parameters:
    PathLike path: output file
    Sequence[str] columns: column names
    Sequence[Sequence] rows: one sequence of cell values per row
    str fmt: 'csv' or 'markdown'

    Returns:
    None
    *****
    """
    if fmt == 'markdown':
        with open(path, 'w') as f:
            f.write(format_markdown(columns, rows))
        return
    if fmt != 'csv':
        raise ValueError(f"Unknown table format '{fmt}'")
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if v is None else (_format(v) if isinstance(v, float) else v) for v in row])
