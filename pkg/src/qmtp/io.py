"""Small CSV helpers with line-numbered errors and atomic writes."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Sequence


class InputError(ValueError):
    """Malformed user input (bad file, bad column, bad value)."""


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_rows(path: str | os.PathLike) -> tuple[list[str] | None, list[tuple[int, list[str]]]]:
    """Parse a comma-separated file; a non-numeric first row is taken as the header.

    Returns ``(header, [(line_number, fields), ...])`` with blank lines dropped.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {p}: {exc.strerror}") from exc
    rows = [(i + 1, [c.strip() for c in r]) for i, r in enumerate(csv.reader(io.StringIO(text)))]
    rows = [(ln, r) for ln, r in rows if r and any(r)]
    if not rows:
        raise InputError(f"{p}: no data rows")
    header = None
    first = rows[0][1]
    if not any(_is_number(c) for c in first):
        header = first
        rows = rows[1:]
    if not rows:
        raise InputError(f"{p}: no data rows")
    return header, rows


def read_columns(path: str | os.PathLike, ncols: int) -> list[list[float]]:
    """Read ``ncols`` numeric columns."""
    _, rows = read_rows(path)
    out: list[list[float]] = [[] for _ in range(ncols)]
    for ln, r in rows:
        if len(r) < ncols:
            raise InputError(f"{path}: line {ln}: expected {ncols} column(s), got {len(r)}")
        for c in range(ncols):
            try:
                out[c].append(float(r[c]))
            except ValueError as exc:
                raise InputError(f"{path}: line {ln}: not a number: {r[c]!r}") from exc
    return out


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f".{p.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
