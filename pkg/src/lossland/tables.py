"""CSV writing/reading shared by the trajectory, spectrum and toy outputs.

Numbers are emitted with 17 significant digits so float64 values survive a
write/read/write cycle byte-identically; files follow RFC-4180 (CRLF,
quoted fields only when needed).
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .errors import DataFormatError


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataFormatError(f"empty CSV: {path}")
    return rows[0], rows[1:]
