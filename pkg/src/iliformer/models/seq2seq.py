"""GRU encoder-decoder with additive (Bahdanau) attention."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tensor, concat, dropout, no_grad, softmax, stack
from ..autodiff.nn import Linear, Module
from ..errors import ConfigError, ContractError, DimensionError
from ..rng import make_rng
from .base import NeuralForecaster
from .recurrent import GruLayer, unstack_time


@dataclass(frozen=True)
class Seq2SeqConfig:
    dense_units: int = 16
    gru_units: int = 32
    horizon: int = 4
    dropout: float = 0.2
    learning_rate: float = 0.02
    teacher_forcing: bool = True
    n_in: int = 10
    feature_arity: int = 1

    def __post_init__(self):
        if min(self.dense_units, self.gru_units, self.horizon, self.n_in, self.feature_arity) < 1:
            raise ConfigError("Seq2Seq sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


class BahdanauAttention(Module):
    def __init__(self, hidden: int, rng: np.random.Generator, attn_units: int | None = None):
        units = attn_units or hidden
        self.w_enc = Linear(hidden, units, rng, bias=False)
        self.w_dec = Linear(hidden, units, rng)
        self.v = Linear(units, 1, rng, bias=False)

    def __call__(self, dec_state: Tensor, enc_outputs: Tensor, enc_keys: Tensor | None = None):
        return bahdanau_attention(dec_state, enc_outputs, self, enc_keys)


def bahdanau_attention(dec_state: Tensor, enc_outputs: Tensor, params: BahdanauAttention,
                       enc_keys: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """``score_i = v . tanh(W1 enc_i + W2 dec)``; returns (context (B, H), weights (B, L)).

    ``enc_keys`` may carry a precomputed ``W1 enc`` to avoid recomputing it
    at every decoding step.
    """
    if enc_outputs.ndim != 3 or enc_outputs.shape[1] == 0:
        raise ContractError(f"attention needs a non-empty (batch, length, hidden) encoder output, got {enc_outputs.shape}")
    b, length, hidden = enc_outputs.shape
    if dec_state.shape != (b, hidden):
        raise DimensionError(f"decoder state {dec_state.shape} does not match encoder outputs {enc_outputs.shape}")
    keys = params.w_enc(enc_outputs) if enc_keys is None else enc_keys
    query = params.w_dec(dec_state).reshape(b, 1, -1)
    scores = params.v((keys + query).tanh()).reshape(b, length)
    weights = softmax(scores)
    context = (weights.reshape(b, 1, length) @ enc_outputs).reshape(b, hidden)
    return context, weights


class Seq2SeqForecaster(NeuralForecaster):
    """Encoder: Dense(16) -> GRU(32).  Decoder: Dense(16) -> GRU(32) attending over encoder outputs.

    Each decoder step consumes the previous value (ground truth under
    teacher forcing at train time, otherwise its own prediction).
    """

    family = "seq2seq"

    def __init__(self, cfg: Seq2SeqConfig, rng: np.random.Generator | int = 0):
        if isinstance(rng, (int, np.integer)):
            rng = make_rng(int(rng))
        self.config = cfg
        h = cfg.gru_units
        self.enc_dense = Linear(cfg.feature_arity, cfg.dense_units, rng)
        self.enc_gru = GruLayer(cfg.dense_units, h, rng)
        self.dec_dense = Linear(1, cfg.dense_units, rng)
        self.dec_gru = GruLayer(cfg.dense_units + h, h, rng)
        self.attention = BahdanauAttention(h, rng)
        self.out = Linear(2 * h, 1, rng)

    def __call__(self, x, y_true=None, training: bool = False, rng=None) -> Tensor:
        cfg = self.config
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 3 or x.shape[1] != cfg.n_in or x.shape[2] != cfg.feature_arity:
            raise DimensionError(f"expected windows of shape (batch, {cfg.n_in}, {cfg.feature_arity}), got {x.shape}")
        forcing = training and cfg.teacher_forcing
        if forcing:
            if y_true is None:
                raise ContractError("teacher forcing needs the true targets during training")
            y_true = y_true if isinstance(y_true, Tensor) else Tensor(y_true)
        b = x.shape[0]
        embedded = [self.enc_dense(x_t).tanh() for x_t in unstack_time(x)]
        enc_seq, state = self.enc_gru.run(embedded, training=training, rate=cfg.dropout, rng=rng)
        enc_out = stack(enc_seq, axis=1)
        keys = self.attention.w_enc(enc_out)
        prev = x[:, -1, 0:1]
        preds = []
        for k in range(cfg.horizon):
            context, _ = self.attention(state, enc_out, keys)
            step_in = concat([self.dec_dense(prev).tanh(), context], axis=-1)
            state = self.dec_gru.run([step_in], state)[1]
            shown = dropout(state, cfg.dropout, training, rng)
            pred = self.out(concat([shown, context], axis=-1))
            preds.append(pred)
            prev = y_true[:, k : k + 1] if forcing else pred
        return concat(preds, axis=1).reshape(b, cfg.horizon)

    def forward_batch(self, inputs, decoder_inputs, targets, training, rng) -> Tensor:
        return self(Tensor(inputs), Tensor(targets), training, rng)

    def predict_first_step(self, inputs: np.ndarray) -> np.ndarray:
        with no_grad():
            return self(Tensor(inputs)).data[:, 0].copy()

    def predict_sequence(self, inputs: np.ndarray) -> np.ndarray:
        with no_grad():
            return self(Tensor(inputs)).data.copy()
