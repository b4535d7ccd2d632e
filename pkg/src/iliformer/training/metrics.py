"""Pearson correlation, RMSE and the per-region evaluation report."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, LengthError, ReportError, UndefinedCorrelationError


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(f"pearson needs equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise LengthError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("pearson correlation is undefined for a constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def rmse(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"rmse needs equal shapes, got {x.shape} and {y.shape}")
    if x.size == 0:
        raise LengthError("rmse of empty vectors")
    d = x - y
    return math.sqrt(float(np.mean(d * d)))


@dataclass
class RegionMetrics:
    region: str
    pearson: float
    rmse: float
    n: int


@dataclass
class EvalReport:
    rows: list[RegionMetrics]
    # (region, year, week, actual, predicted) in original units
    series: list[tuple[str, int, int, float, float]] = field(default_factory=list)

    @property
    def mean_pearson(self) -> float:
        vals = [r.pearson for r in self.rows if not math.isnan(r.pearson)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([r.rmse for r in self.rows])) if self.rows else math.nan

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["region", "pearson", "rmse", "n"])
        for r in self.rows:
            w.writerow([r.region, repr(r.pearson), repr(r.rmse), r.n])
        return buf.getvalue()

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["region", "year", "week", "actual", "predicted"])
        for region, year, week, actual, pred in self.series:
            w.writerow([region, year, week, repr(actual), repr(pred)])
        return buf.getvalue()

    def summary(self) -> str:
        return (
            f"regions = {len(self.rows)}\n"
            f"points = {sum(r.n for r in self.rows)}\n"
            f"mean_pearson = {self.mean_pearson!r}\n"
            f"mean_rmse = {self.mean_rmse!r}\n"
        )


def build_report(regions, years, weeks, actual, predicted) -> EvalReport:
    """Group one-step predictions (original units) by region and score them.

    Regions with a constant actual or predicted series get ``nan`` Pearson
    rather than aborting the whole report.
    """
    regions = np.asarray(regions, dtype=object)
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if len(actual) == 0:
        raise ReportError("cannot evaluate on an empty test set")
    rows = []
    for region in dict.fromkeys(regions.tolist()):
        idx = np.flatnonzero(regions == region)
        a, p = actual[idx], predicted[idx]
        try:
            r = pearson(p, a)
        except (UndefinedCorrelationError, LengthError):
            r = math.nan
        rows.append(RegionMetrics(region, r, rmse(p, a), len(idx)))
    series = [
        (str(g), int(y), int(w), float(a), float(p))
        for g, y, w, a, p in zip(regions, years, weeks, actual, predicted)
    ]
    return EvalReport(rows, series)
