"""Stacked-LSTM direct multi-step forecaster."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tensor, no_grad
from ..autodiff.nn import Linear
from ..errors import ConfigError, DimensionError
from ..rng import make_rng
from .base import NeuralForecaster
from .recurrent import LstmLayer, unstack_time


@dataclass(frozen=True)
class LstmConfig:
    units: tuple[int, ...] = (32, 16)
    horizon: int = 4
    dropout: float = 0.2
    learning_rate: float = 0.02
    n_in: int = 10
    feature_arity: int = 1

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(int(u) for u in self.units))
        if not self.units or min(self.units) < 1:
            raise ConfigError(f"LSTM layer sizes must be positive, got {self.units}")
        if min(self.horizon, self.n_in, self.feature_arity) < 1:
            raise ConfigError("horizon, n_in and feature_arity must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["units"] = list(self.units)
        return d


class LstmForecaster(NeuralForecaster):
    """LSTM(32) -> LSTM(16) -> Dense(M); predicts all M steps at once."""

    family = "lstm"

    def __init__(self, cfg: LstmConfig, rng: np.random.Generator | int = 0):
        if isinstance(rng, (int, np.integer)):
            rng = make_rng(int(rng))
        self.config = cfg
        sizes = (cfg.feature_arity,) + cfg.units
        self.layers = [LstmLayer(a, b, rng) for a, b in zip(sizes, sizes[1:])]
        self.head = Linear(cfg.units[-1], cfg.horizon, rng)

    def __call__(self, x, training: bool = False, rng=None) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 3 or x.shape[1] != self.config.n_in or x.shape[2] != self.config.feature_arity:
            raise DimensionError(
                f"expected windows of shape (batch, {self.config.n_in}, {self.config.feature_arity}), got {x.shape}"
            )
        seq = unstack_time(x)
        for layer in self.layers:
            seq = layer.run(seq, training, self.config.dropout, rng)
        return self.head(seq[-1])

    def forward_batch(self, inputs, decoder_inputs, targets, training, rng) -> Tensor:
        return self(Tensor(inputs), training, rng)

    def predict_first_step(self, inputs: np.ndarray) -> np.ndarray:
        with no_grad():
            return self(Tensor(inputs)).data[:, 0].copy()

    def predict_sequence(self, inputs: np.ndarray) -> np.ndarray:
        with no_grad():
            return self(Tensor(inputs)).data.copy()
