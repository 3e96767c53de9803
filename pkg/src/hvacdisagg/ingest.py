"""Reading and writing the on-disk CSV formats.

Trend logs are long-format CSV with header ``timestamp,point,value``;
timestamps are ISO-8601 with a UTC offset and values are plain decimals.
Raw samples land on the canonical grid by bucket: mean for analog points,
last-wins for boolean ones. Percent-tagged commands are divided by 100 so
everything downstream works in fractions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .building import PointBinding, PointInfo
from .errors import IngestError
from .timeseries import TimeSeries, Unit

__all__ = [
    "IngestStats",
    "parse_timestamp",
    "format_timestamp",
    "read_points",
    "write_points",
    "read_trends",
    "write_trends",
    "read_reference_year",
    "write_reference_year",
]

TREND_HEADER = ["timestamp", "point", "value"]
POINTS_HEADER = ["point_id", "name", "unit"]
REFERENCE_YEAR_HEADER = ["day_of_year", "oat_f"]


def parse_timestamp(text: str) -> int:
    """ISO-8601 with offset to UTC epoch seconds. Naive timestamps are rejected."""
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp '{text}' has no UTC offset")
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


@dataclass
class IngestStats:
    rows: int = 0
    skipped: int = 0
    duplicates: int = 0
    unknown_points: int = 0
    messages: list = field(default_factory=list)


_NORMALIZED_UNIT = {Unit.PERCENT: Unit.FRACTION}


def read_trends(
    path: str,
    binding: PointBinding,
    interval_s: int = 900,
    strict: bool = False,
) -> tuple[dict, IngestStats]:
    """Load a trend CSV into per-(equipment, role) series on the canonical grid.

    Duplicate (timestamp, point) rows keep the last occurrence. Unknown points
    are counted and dropped. Malformed rows raise in strict mode and are
    skipped (and counted) otherwise.
    """
    slots_by_point: dict = {}
    for slot, point_id in binding.bindings.items():
        slots_by_point.setdefault(point_id, []).append(slot)

    samples: dict = {pid: {} for pid in slots_by_point}
    unknown: set = set()
    stats = IngestStats()

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == TREND_HEADER:
                continue
            if len(row) != 3:
                if strict:
                    raise IngestError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
                stats.skipped += 1
                continue
            stats.rows += 1
            point_id = row[1].strip()
            if point_id not in samples:
                unknown.add(point_id)
                continue
            try:
                epoch = parse_timestamp(row[0])
                value = float(row[2])
            except ValueError as exc:
                if strict:
                    raise IngestError(f"{path}:{lineno}: {exc}") from exc
                stats.skipped += 1
                continue
            if not math.isfinite(value):
                if strict:
                    raise IngestError(f"{path}:{lineno}: non-finite value")
                stats.skipped += 1
                continue
            bucket = samples[point_id]
            if epoch in bucket:
                stats.duplicates += 1
            bucket[epoch] = value

    stats.unknown_points = len(unknown)
    if unknown:
        shown = ", ".join(sorted(unknown)[:5])
        stats.messages.append(f"{len(unknown)} unbound point(s) ignored ({shown} ...)")

    series_by_point: dict = {}
    for point_id, by_epoch in samples.items():
        if not by_epoch:
            continue
        unit = binding.units.get(point_id, Unit.DEG_F)
        epochs = np.fromiter(by_epoch.keys(), dtype=np.int64, count=len(by_epoch))
        values = np.fromiter(by_epoch.values(), dtype=float, count=len(by_epoch))
        order = np.argsort(epochs, kind="stable")
        epochs, values = epochs[order], values[order]
        if unit is Unit.PERCENT:
            values = values / 100.0
        elif unit is Unit.BOOL:
            values = (values != 0.0).astype(float)

        first = (int(epochs[0]) // interval_s) * interval_s
        last = (int(epochs[-1]) // interval_s) * interval_s
        n_out = (last - first) // interval_s + 1
        idx = (epochs - first) // interval_s
        out = np.full(n_out, np.nan)
        if unit is Unit.BOOL:
            out[idx] = values  # later samples in a bucket overwrite earlier ones
        else:
            sums = np.zeros(n_out)
            counts = np.zeros(n_out)
            np.add.at(sums, idx, values)
            np.add.at(counts, idx, 1.0)
            got = counts > 0
            out[got] = sums[got] / counts[got]
        series_by_point[point_id] = TimeSeries(
            point_id=point_id,
            start=first,
            interval_s=interval_s,
            unit=_NORMALIZED_UNIT.get(unit, unit),
            values=out,
        )

    result: dict = {}
    for point_id, series in series_by_point.items():
        for slot in slots_by_point[point_id]:
            result[slot] = series
    return result, stats


def read_points(path: str) -> list[PointInfo]:
    """Point inventory CSV: point_id, display name, unit tag."""
    points: list[PointInfo] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == POINTS_HEADER:
                continue
            if len(row) != 3:
                raise IngestError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            point_id, name, unit_text = (c.strip() for c in row)
            if point_id in seen:
                raise IngestError(f"{path}:{lineno}: duplicate point id '{point_id}'")
            seen.add(point_id)
            try:
                unit = Unit(unit_text)
            except ValueError:
                raise IngestError(
                    f"{path}:{lineno}: unknown unit '{unit_text}' for point '{point_id}'"
                ) from None
            points.append(PointInfo(point_id=point_id, raw_name=name, unit=unit))
    return points


def write_points(points, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POINTS_HEADER)
        for p in sorted(points, key=lambda p: p.point_id):
            writer.writerow([p.point_id, p.raw_name, p.unit.value])


def write_trends(series_list, path: str) -> None:
    """Write series out in the trend CSV format, gaps omitted.

    Values go through repr() so a read-back reproduces the exact floats;
    rows are point-major and time-ordered, which keeps output byte-stable.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TREND_HEADER)
        for series in sorted(series_list, key=lambda s: s.point_id):
            ts = series.timestamps()
            for i, v in enumerate(series.values):
                if math.isnan(v):
                    continue
                writer.writerow([format_timestamp(int(ts[i])), series.point_id, repr(float(v))])


def read_reference_year(path: str) -> np.ndarray:
    """Daily outdoor temps for a reference year, indexed day-of-year 1..365."""
    out = np.full(365, np.nan)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == REFERENCE_YEAR_HEADER:
                continue
            if len(row) != 2:
                raise IngestError(f"{path}:{lineno}: expected 2 columns")
            try:
                day = int(row[0])
                oat = float(row[1])
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
            if day == 366:
                continue  # leap day has no slot in the 365-day reference
            if not 1 <= day <= 365:
                raise IngestError(f"{path}:{lineno}: day_of_year {day} out of range")
            out[day - 1] = oat
    missing = int(np.isnan(out).sum())
    if missing:
        raise IngestError(f"{path}: reference year incomplete, {missing} day(s) missing")
    return out


def write_reference_year(daily_oat_f, path: str) -> None:
    vals = np.asarray(daily_oat_f, dtype=float)
    if len(vals) != 365:
        raise IngestError(f"reference year needs 365 values, got {len(vals)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REFERENCE_YEAR_HEADER)
        for day, oat in enumerate(vals, start=1):
            writer.writerow([day, repr(float(oat))])
