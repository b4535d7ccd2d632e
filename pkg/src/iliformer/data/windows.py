"""Sliding-window construction of supervised (X, Y) pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import LengthError, SchemaError


@dataclass
class WindowedDataset:
    """Supervised samples.

    ``inputs`` is (S, n_in, k) feature rows, ``targets`` is (S, M) scaled
    values and ``future`` (S, M, k) holds the feature rows at the target
    positions, from which decoder inputs are built.  ``target_index`` is
    the position of each sample's first target in its region's raw series.
    """

    inputs: np.ndarray
    targets: np.ndarray
    future: np.ndarray
    feature_names: tuple[str, ...]
    regions: np.ndarray
    target_index: np.ndarray
    target_year: np.ndarray = field(default=None)
    target_week: np.ndarray = field(default=None)

    def __post_init__(self):
        s = len(self.inputs)
        if self.target_year is None:
            self.target_year = np.zeros(s, dtype=np.int64)
        if self.target_week is None:
            self.target_week = np.zeros(s, dtype=np.int64)
        lengths = {len(a) for a in (self.targets, self.future, self.regions, self.target_index, self.target_year, self.target_week)}
        if lengths - {s}:
            raise SchemaError("WindowedDataset fields disagree on sample count")

    @classmethod
    def empty(cls, n_in: int, horizon: int, feature_names: tuple[str, ...]) -> "WindowedDataset":
        k = len(feature_names)
        return cls(
            np.zeros((0, n_in, k)),
            np.zeros((0, horizon)),
            np.zeros((0, horizon, k)),
            tuple(feature_names),
            np.array([], dtype=object),
            np.zeros(0, dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def n_in(self) -> int:
        return self.inputs.shape[1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]

    @property
    def arity(self) -> int:
        return self.inputs.shape[2]

    def decoder_inputs(self) -> np.ndarray:
        """Last encoder row followed by the first M-1 target rows (one-position offset)."""
        return np.concatenate([self.inputs[:, -1:, :], self.future[:, :-1, :]], axis=1)

    def subset(self, index) -> "WindowedDataset":
        index = np.asarray(index)
        return WindowedDataset(
            self.inputs[index],
            self.targets[index],
            self.future[index],
            self.feature_names,
            self.regions[index],
            self.target_index[index],
            self.target_year[index],
            self.target_week[index],
        )

    def region_names(self) -> list[str]:
        """Regions in order of first appearance."""
        return list(dict.fromkeys(self.regions.tolist()))


def make_windows(
    rows,
    n_in: int,
    horizon: int,
    targets=None,
    feature_names: tuple[str, ...] | None = None,
    region: str = "",
    index_offset: int = 0,
) -> WindowedDataset:
    """Stride-1 windows: X = rows[i, i+n_in), Y = targets[i+n_in, i+n_in+M).

    ``rows`` is 1-D (univariate) or (T, k).  ``targets`` defaults to the
    first column of ``rows``.
    """
    r = np.asarray(rows, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    y = r[:, 0] if targets is None else np.asarray(targets, dtype=np.float64)
    if len(y) != len(r):
        raise SchemaError(f"targets length {len(y)} differs from rows length {len(r)}")
    if n_in < 1 or horizon < 1:
        raise LengthError(f"n_in and horizon must be positive, got {n_in}, {horizon}")
    need = n_in + horizon
    length = len(r)
    if length < need:
        raise LengthError(f"series of length {length} is too short for n_in={n_in}, M={horizon}; need at least {need}")
    count = length - need + 1
    starts = np.arange(count)
    x_idx = starts[:, None] + np.arange(n_in)[None, :]
    y_idx = starts[:, None] + n_in + np.arange(horizon)[None, :]
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(r.shape[1]))
    return WindowedDataset(
        r[x_idx],
        y[y_idx],
        r[y_idx],
        names,
        np.array([region] * count, dtype=object),
        starts + n_in + index_offset,
    )


def concat_regions(datasets: list[WindowedDataset]) -> WindowedDataset:
    """Stack per-region datasets; windows never span regions."""
    if not datasets:
        return WindowedDataset.empty(0, 0, ())
    first = datasets[0]
    layout = (first.n_in, first.horizon, first.arity)
    for ds in datasets[1:]:
        if (ds.n_in, ds.horizon, ds.arity) != layout:
            raise SchemaError(
                f"cannot concatenate datasets with layout (n_in, M, arity) {(ds.n_in, ds.horizon, ds.arity)} and {layout}"
            )
    return WindowedDataset(
        np.concatenate([d.inputs for d in datasets]),
        np.concatenate([d.targets for d in datasets]),
        np.concatenate([d.future for d in datasets]),
        first.feature_names,
        np.concatenate([d.regions for d in datasets]),
        np.concatenate([d.target_index for d in datasets]),
        np.concatenate([d.target_year for d in datasets]),
        np.concatenate([d.target_week for d in datasets]),
    )
