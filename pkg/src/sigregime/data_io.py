"""CSV ingestion for real-data studies.

Input files carry a header row whose first column is a timestamp (ISO date
or plain number) followed by one column per instrument.  Calendar dates are
replaced by the trading-day convention: after sorting, consecutive rows sit
1/252 apart regardless of calendar gaps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .streams import TimeAugmentedStream

TRADING_DAYS = 252.0


@dataclass(frozen=True)
class IngestReport:
    columns: tuple
    n_rows: int
    n_dropped_missing: int
    n_unparseable: int


def _parse_timestamp(raw: str):
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        return np.datetime64(raw)
    except ValueError:
        return None


def ingest_csv(path, max_unparseable_frac: float = 0.01):
    """Load a delimited price file into a stream on the trading-day clock.

    Rows with any missing value are dropped (counted in the report); rows
    that fail to parse beyond ``max_unparseable_frac`` of the file abort the
    ingestion.  Duplicate timestamps are a format error.

    Returns (TimeAugmentedStream, IngestReport).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = list(reader)
    if len(header) < 2:
        raise DataError("expected a timestamp column plus at least one value column")
    columns = tuple(c.strip() for c in header[1:])
    parsed = []
    n_missing = 0
    n_bad = 0
    for row in rows:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            n_bad += 1
            continue
        ts = _parse_timestamp(row[0])
        if ts is None:
            n_bad += 1
            continue
        if any(not c.strip() for c in row[1:]):
            n_missing += 1
            continue
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError:
            n_bad += 1
            continue
        parsed.append((ts, vals))
    total = len(rows)
    if total == 0:
        raise DataError(f"{path} holds no data rows")
    if n_bad > max_unparseable_frac * total:
        raise DataError(f"{n_bad} of {total} rows unparseable (threshold {max_unparseable_frac:.0%})")
    if len(parsed) < 2:
        raise DataError("fewer than two usable rows after cleaning")
    # sort by raw timestamp; mixed numeric/date keys cannot be ordered
    kinds = {type(p[0]) for p in parsed}
    if len(kinds) > 1:
        raise DataError("timestamp column mixes dates and numbers")
    parsed.sort(key=lambda p: p[0])
    for a, b in zip(parsed, parsed[1:]):
        if a[0] == b[0]:
            raise DataError(f"duplicate timestamp {a[0]!r}")
    values = np.array([p[1] for p in parsed])
    timestamps = np.arange(len(parsed)) / TRADING_DAYS
    stream = TimeAugmentedStream(timestamps, values)
    report = IngestReport(columns, len(parsed), n_missing, n_bad)
    return stream, report


def write_stream_csv(stream: TimeAugmentedStream, path, columns=None):
    """Write a stream back out as (time, channel...) rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = stream.dimension
    names = list(columns) if columns else [f"x{i}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + names)
        for t, row in zip(stream.timestamps, stream.values):
            writer.writerow([f"{t:.10g}"] + [f"{v:.12g}" for v in row])
