"""Series -> scaled feature rows -> train/test windows, per region and globally."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, LengthError
from .features import FeatureSpec, make_features
from .scaling import ScalerParams, fit_scaler
from .series import RawSeries, split_point
from .windows import WindowedDataset, concat_regions, make_windows

TEST_CONTEXTS = ("train_tail", "test_only")


@dataclass(frozen=True)
class PipelineConfig:
    n_in: int = 10
    horizon: int = 4
    features: FeatureSpec = field(default_factory=FeatureSpec)
    allow_degenerate: bool = False
    # train_tail: test windows may take their inputs from the end of the
    # training segment so the first test weeks are also predicted.
    test_context: str = "train_tail"

    def __post_init__(self):
        if self.test_context not in TEST_CONTEXTS:
            raise ConfigError(f"test_context must be one of {TEST_CONTEXTS}, got {self.test_context!r}")
        if self.n_in < 1 or self.horizon < 1:
            raise ConfigError(f"n_in and horizon must be positive, got {self.n_in} and {self.horizon}")


class FeatureEncoder:
    """Maps raw values (and week numbers) to scaled feature rows for one region."""

    def __init__(self, spec: FeatureSpec, scalers: list[ScalerParams | None]):
        self.spec = spec
        self.scalers = scalers

    @property
    def value_scaler(self) -> ScalerParams:
        return self.scalers[0]

    def scale_rows(self, rows: np.ndarray) -> np.ndarray:
        out = np.array(rows, dtype=np.float64, copy=True)
        for j, sc in enumerate(self.scalers):
            if sc is not None:
                out[..., j] = sc.apply(out[..., j])
        return out

    def encode(self, values, weeks=None) -> np.ndarray:
        """Scaled rows for timesteps ``spec.lookback .. len(values)-1``."""
        return self.scale_rows(make_features(values, weeks, self.spec))

    def to_dict(self) -> dict:
        return {
            "features": str(self.spec),
            "scalers": [None if s is None else [s.min, s.max, s.degenerate] for s in self.scalers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoder":
        scalers = [None if s is None else ScalerParams(s[0], s[1], bool(s[2])) for s in d["scalers"]]
        return cls(FeatureSpec.parse(d["features"]), scalers)


def fit_encoder(train_rows: np.ndarray, spec: FeatureSpec, allow_degenerate: bool = False) -> FeatureEncoder:
    """Per-feature min-max fitted on training rows; the week column keeps its fixed week/53 map."""
    scalers: list[ScalerParams | None] = []
    for name, col in zip(spec.names, np.asarray(train_rows).T):
        if name == "week":
            scalers.append(None)
        else:
            scalers.append(fit_scaler(col, allow_degenerate=allow_degenerate))
    return FeatureEncoder(spec, scalers)


@dataclass
class RegionData:
    series: RawSeries
    n_train: int
    offset: int
    rows: np.ndarray
    encoder: FeatureEncoder
    train: WindowedDataset
    test: WindowedDataset

    @property
    def region(self) -> str:
        return self.series.region


def _tag(ds: WindowedDataset, series: RawSeries) -> WindowedDataset:
    years, weeks = series.years, series.weeks
    ds.target_year = years[ds.target_index]
    ds.target_week = weeks[ds.target_index]
    return ds


def prepare_region(series: RawSeries, cfg: PipelineConfig) -> RegionData:
    spec = cfg.features
    values = series.values
    n = len(values)
    n_train = split_point(n)
    offset = spec.lookback
    raw_rows = make_features(values, series.weeks, spec)
    n_train_rows = n_train - offset
    if n_train_rows < 1:
        raise LengthError(f"{series.region}: no training rows left after dropping {offset} leading timesteps")
    encoder = fit_encoder(raw_rows[:n_train_rows], spec, cfg.allow_degenerate)
    rows = encoder.scale_rows(raw_rows)
    names = spec.names

    train = make_windows(rows[:n_train_rows], cfg.n_in, cfg.horizon, feature_names=names,
                         region=series.region, index_offset=offset)
    if cfg.test_context == "train_tail":
        first = max(0, n_train_rows - cfg.n_in)
    else:
        first = n_train_rows
    test = make_windows(rows[first:], cfg.n_in, cfg.horizon, feature_names=names,
                        region=series.region, index_offset=offset + first)
    keep = test.target_index >= n_train
    test = test.subset(np.flatnonzero(keep))
    return RegionData(series, n_train, offset, rows, encoder, _tag(train, series), _tag(test, series))


@dataclass
class PreparedData:
    config: PipelineConfig
    regions: list[RegionData]
    dropped: list[tuple[str, str]]
    train: WindowedDataset
    test: WindowedDataset

    def region(self, name: str) -> RegionData:
        for r in self.regions:
            if r.region == name:
                return r
        raise KeyError(name)

    def manifest(self) -> str:
        cfg = self.config
        lines = [
            f"n_in = {cfg.n_in}",
            f"horizon = {cfg.horizon}",
            f"features = {cfg.features}",
            f"feature_names = {','.join(cfg.features.names)}",
            "scaling = per-feature min-max fitted on training rows; week column fixed at week/53",
            "split = first floor(2n/3) points train, remainder test",
            f"test_context = {cfg.test_context}",
            f"regions_kept = {','.join(r.region for r in self.regions)}",
            f"regions_dropped = {';'.join(f'{name} ({why})' for name, why in self.dropped)}",
        ]
        for r in self.regions:
            p = f"region.{r.region}"
            lines.append(f"{p}.n_points = {len(r.series)}")
            lines.append(f"{p}.n_train = {r.n_train}")
            lines.append(f"{p}.interpolated_weeks = {len(r.series.filled)}")
            for name, sc in zip(cfg.features.names, r.encoder.scalers):
                text = "fixed" if sc is None else f"{sc.min!r},{sc.max!r}" + (",degenerate" if sc.degenerate else "")
                lines.append(f"{p}.scaler.{name} = {text}")
            lines.append(f"{p}.train_windows = {len(r.train)}")
            lines.append(f"{p}.test_windows = {len(r.test)}")
        lines.append(f"total.train_windows = {len(self.train)}")
        lines.append(f"total.test_windows = {len(self.test)}")
        return "\n".join(lines) + "\n"


def prepare(series: list[RawSeries], cfg: PipelineConfig | None = None) -> PreparedData:
    """Run the full data preparation for every region.

    Regions too short to yield both train and test windows are dropped and
    listed with the reason; other errors propagate.
    """
    cfg = cfg or PipelineConfig()
    kept: list[RegionData] = []
    dropped: list[tuple[str, str]] = []
    for s in series:
        try:
            rd = prepare_region(s, cfg)
        except LengthError as exc:
            dropped.append((s.region, str(exc)))
            continue
        if len(rd.test) == 0:
            dropped.append((s.region, "no test windows"))
            continue
        kept.append(rd)
    names = cfg.features.names
    train = concat_regions([r.train for r in kept]) if kept else WindowedDataset.empty(cfg.n_in, cfg.horizon, names)
    test = concat_regions([r.test for r in kept]) if kept else WindowedDataset.empty(cfg.n_in, cfg.horizon, names)
    return PreparedData(cfg, kept, dropped, train, test)

