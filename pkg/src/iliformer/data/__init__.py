from .features import FeatureSpec, TdeConfig, differences, make_features, make_tde
from .pipeline import FeatureEncoder, PipelineConfig, PreparedData, RegionData, fit_encoder, prepare, prepare_region
from .scaling import ScalerParams, apply_scaler, fit_scaler, invert_scaler
from .series import CsvSchema, RawSeries, find_gaps, ingest_csv, split_point, split_train_test, write_csv
from .windows import WindowedDataset, concat_regions, make_windows

__all__ = [
    "CsvSchema",
    "FeatureEncoder",
    "FeatureSpec",
    "PipelineConfig",
    "PreparedData",
    "RawSeries",
    "RegionData",
    "ScalerParams",
    "TdeConfig",
    "WindowedDataset",
    "apply_scaler",
    "concat_regions",
    "differences",
    "find_gaps",
    "fit_encoder",
    "fit_scaler",
    "ingest_csv",
    "invert_scaler",
    "make_features",
    "make_tde",
    "make_windows",
    "prepare",
    "prepare_region",
    "split_point",
    "split_train_test",
    "write_csv",
]
