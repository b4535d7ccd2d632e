"""Weekly regional series and CSV ingestion."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import LengthError, RowError, SchemaError, ValidationError

Key = tuple[int, int]


@dataclass(frozen=True)
class RawSeries:
    """One region's weekly observations, ordered by (epi_year, epi_week)."""

    region: str
    points: tuple[tuple[int, int, float], ...]
    filled: tuple[Key, ...] = field(default=(), compare=False)

    def __post_init__(self):
        keys = [(y, w) for y, w, _ in self.points]
        for prev, cur in zip(keys, keys[1:]):
            if cur <= prev:
                raise ValidationError(f"{self.region}: weeks not strictly increasing at {prev} -> {cur}")
        for y, w, v in self.points:
            if not 1 <= w <= 53:
                raise ValidationError(f"{self.region}: week {w} of {y} outside 1..53")
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{self.region}: value {v} at {y}/{w} is not a nonnegative real")

    @classmethod
    def from_values(cls, region: str, values, start: Key = (2010, 40), weeks_per_year: int = 52) -> "RawSeries":
        """Build a series from bare values, numbering weeks from ``start``."""
        year, week = start
        points = []
        for v in values:
            points.append((year, week, float(v)))
            week += 1
            if week > weeks_per_year:
                year, week = year + 1, 1
        return cls(region, tuple(points))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, _, v in self.points], dtype=np.float64)

    @property
    def years(self) -> np.ndarray:
        return np.array([y for y, _, _ in self.points], dtype=np.int64)

    @property
    def weeks(self) -> np.ndarray:
        return np.array([w for _, w, _ in self.points], dtype=np.int64)

    def segment(self, start: int, stop: int | None = None) -> "RawSeries":
        return RawSeries(self.region, self.points[start:stop])


@dataclass(frozen=True)
class CsvSchema:
    region: str = "region"
    year: str = "year"
    week: str = "week"
    value: str = "value"


def _next_key(key: Key, long_years: set[int]) -> Key:
    year, week = key
    last = 53 if year in long_years else 52
    return (year, week + 1) if week < last else (year + 1, 1)


def find_gaps(keys: list[Key], long_years: set[int]) -> list[Key]:
    """Weeks missing between consecutive sorted keys."""
    missing = []
    for prev, cur in zip(keys, keys[1:]):
        k = _next_key(prev, long_years)
        while k < cur:
            missing.append(k)
            k = _next_key(k, long_years)
    return missing


def _interpolate(points: list[tuple[int, int, float]], long_years: set[int]) -> tuple[list, list[Key]]:
    out = [points[0]]
    filled: list[Key] = []
    for (y0, w0, v0), (y1, w1, v1) in zip(points, points[1:]):
        gap = []
        k = _next_key((y0, w0), long_years)
        while k < (y1, w1):
            gap.append(k)
            k = _next_key(k, long_years)
        steps = len(gap) + 1
        for i, (y, w) in enumerate(gap, start=1):
            out.append((y, w, v0 + (v1 - v0) * i / steps))
        filled.extend(gap)
        out.append((y1, w1, v1))
    return out, filled


def ingest_csv(path, schema: CsvSchema | None = None, missing: str = "error") -> list[RawSeries]:
    """Read ``region,year,week,value`` rows into one series per region.

    Regions come back sorted by name.  ``missing`` is ``"error"`` (default)
    or ``"interpolate"``, which fills absent weeks linearly and lists them in
    ``RawSeries.filled``.
    """
    schema = schema or CsvSchema()
    if missing not in ("error", "interpolate"):
        raise ValidationError(f"missing must be 'error' or 'interpolate', got {missing!r}")
    rows: dict[str, list[tuple[int, int, float]]] = defaultdict(list)
    seen: dict[tuple[str, int, int], int] = {}
    duplicates: list[str] = []
    with open(Path(path), newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = [schema.region, schema.year, schema.week, schema.value]
        absent = [c for c in wanted if c not in header]
        if absent:
            raise SchemaError(f"missing column(s) {absent}; header is {header}")
        for record in reader:
            line = reader.line_num
            region = (record[schema.region] or "").strip()
            if not region:
                raise RowError(line, "empty region")
            try:
                year = int(record[schema.year])
                week = int(record[schema.week])
            except (TypeError, ValueError):
                raise RowError(line, f"non-integer year/week {record[schema.year]!r}/{record[schema.week]!r}") from None
            if not 1 <= week <= 53:
                raise RowError(line, f"week {week} outside 1..53")
            raw = record[schema.value]
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise RowError(line, f"non-numeric value {raw!r}") from None
            if not math.isfinite(value) or value < 0:
                raise RowError(line, f"value {raw!r} is not a nonnegative real")
            key = (region, year, week)
            if key in seen:
                duplicates.append(f"{region}/{year}/{week} (lines {seen[key]} and {line})")
                continue
            seen[key] = line
            rows[region].append((year, week, value))
    if duplicates:
        raise ValidationError("duplicate (region, year, week): " + "; ".join(duplicates))

    long_years = {y for pts in rows.values() for y, w, _ in pts if w == 53}
    series = []
    gap_report = []
    for region in sorted(rows):
        points = sorted(rows[region])
        gaps = find_gaps([(y, w) for y, w, _ in points], long_years)
        filled: list[Key] = []
        if gaps:
            if missing == "error":
                shown = ", ".join(f"{y}/{w}" for y, w in gaps[:5])
                gap_report.append(f"{region}: {len(gaps)} missing week(s) [{shown}{', ...' if len(gaps) > 5 else ''}]")
                continue
            points, filled = _interpolate(points, long_years)
        series.append(RawSeries(region, tuple(points), tuple(filled)))
    if gap_report:
        raise ValidationError("missing weeks (use interpolation to fill): " + "; ".join(gap_report))
    return series


def write_csv(path, series: list[RawSeries]) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["region", "year", "week", "value"])
        for s in series:
            for y, w, v in s.points:
                writer.writerow([s.region, y, w, repr(v)])


def split_point(n: int) -> int:
    """Number of training points under the 2:1 chronological split."""
    if n < 3:
        raise LengthError(f"series of length {n} is too short to split (need at least 3)")
    return (2 * n) // 3


def split_train_test(series):
    """Chronological 2:1 split of a RawSeries or array-like."""
    cut = split_point(len(series))
    if isinstance(series, RawSeries):
        return series.segment(0, cut), series.segment(cut)
    return series[:cut], series[cut:]
