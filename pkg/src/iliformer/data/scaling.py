"""Min-max scaling fitted on training rows only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateScalerError, LengthError


@dataclass(frozen=True)
class ScalerParams:
    min: float
    max: float
    degenerate: bool = False

    def __post_init__(self):
        if self.max < self.min:
            raise ValueError(f"scaler max {self.max} below min {self.min}")

    def apply(self, values):
        v = np.asarray(values, dtype=np.float64)
        if self.degenerate:
            return np.full_like(v, 0.5)
        return (v - self.min) / (self.max - self.min)

    def invert(self, scaled):
        s = np.asarray(scaled, dtype=np.float64)
        if self.degenerate:
            return np.full_like(s, self.min)
        return s * (self.max - self.min) + self.min

    @property
    def span(self) -> float:
        return self.max - self.min


def fit_scaler(train_values, allow_degenerate: bool = False) -> ScalerParams:
    """Fit on training values.  Constant data raises unless ``allow_degenerate``,
    in which case every value maps to 0.5."""
    v = np.asarray(train_values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise LengthError("cannot fit a scaler on an empty training set")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        if not allow_degenerate:
            raise DegenerateScalerError(f"training values are constant ({lo}); min-max scaling is undefined")
        return ScalerParams(lo, hi, degenerate=True)
    return ScalerParams(lo, hi)


def apply_scaler(params: ScalerParams, values):
    return params.apply(values)


def invert_scaler(params: ScalerParams, scaled):
    return params.invert(scaled)
