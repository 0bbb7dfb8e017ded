"""Byte-stable CSV serialization.

One column order per table, floats at 17 significant digits (enough to
round-trip IEEE doubles), booleans as true/false, vertices as
semicolon-joined coordinates, and a bare LF terminator on every platform —
so identical rows always serialize to identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["format_cell", "write_csv", "read_csv"]


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (tuple, list)):
        return ";".join(format_cell(v) for v in value)
    return str(value)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Header and raw string rows of a CSV written by write_csv."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]
