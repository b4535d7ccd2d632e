"""Encoder-decoder Transformer for multi-step time-series forecasting.

Post-norm layers with residual connections.  The encoder sees the whole
input window; the decoder input starts with the last encoder timestep and
is shifted one position behind the targets, with a look-ahead mask so
position k only attends to decoder positions <= k.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Tensor, dropout, no_grad, softmax
from ..autodiff.nn import LayerNorm, Linear, Module
from .base import NeuralForecaster
from ..errors import CapabilityError, ConfigError, ContractError, DimensionError
from ..rng import make_rng


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 4
    d_ff: int = 256
    dropout: float = 0.2
    n_in: int = 10
    horizon: int = 4
    feature_arity: int = 1

    def __post_init__(self):
        for name in ("d_model", "n_heads", "n_layers", "d_ff", "n_in", "horizon", "feature_arity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even for sinusoidal positions, got {self.d_model}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


def positional_encoding(max_len: int, d_model: int) -> Tensor:
    """``PE[pos, 2i] = sin(pos / 10000^(2i/d))``, ``PE[pos, 2i+1] = cos(...)``."""
    if d_model % 2:
        raise ConfigError(f"positional encoding needs an even d_model, got {d_model}")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    two_i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, two_i / d_model)
    pe = np.empty((max_len, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return Tensor(pe)


def look_ahead_mask(n: int) -> np.ndarray:
    """Boolean (n, n) mask; cell (i, j) is permitted iff j <= i."""
    if n < 1:
        raise DimensionError(f"mask size must be positive, got {n}")
    return np.tril(np.ones((n, n), dtype=bool))


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int = 1,
                                 mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Split into heads, attend, and merge heads back.

    ``q`` is (B, Lq, d); ``k`` and ``v`` are (B, Lk, d).  Returns the merged
    output (B, Lq, d) and the attention weights (B, h, Lq, Lk).
    """
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
        raise DimensionError(f"attention expects (batch, length, d) inputs, got {q.shape}, {k.shape}, {v.shape}")
    b, lq, d = q.shape
    lk = k.shape[1]
    if k.shape != v.shape or k.shape[0] != b or k.shape[2] != d:
        raise DimensionError(f"attention shape mismatch: q {q.shape}, k {k.shape}, v {v.shape}")
    if d % n_heads:
        raise DimensionError(f"d={d} not divisible into {n_heads} heads")
    if mask is not None and np.shape(mask)[-2:] != (lq, lk):
        raise DimensionError(f"mask shape {np.shape(mask)} does not match ({lq}, {lk})")
    dk = d // n_heads
    qh = q.reshape(b, lq, n_heads, dk).transpose(0, 2, 1, 3)
    kh = k.reshape(b, lk, n_heads, dk).transpose(0, 2, 3, 1)
    vh = v.reshape(b, lk, n_heads, dk).transpose(0, 2, 1, 3)
    weights = softmax((qh @ kh) * (1.0 / math.sqrt(dk)), mask=mask)
    out = (weights @ vh).transpose(0, 2, 1, 3).reshape(b, lq, d)
    return out, weights


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        self.n_heads = n_heads
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.o = Linear(d_model, d_model, rng)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor, mask=None) -> Tensor:
        out, _ = scaled_dot_product_attention(self.q(query), self.k(key), self.v(value), self.n_heads, mask)
        return self.o(out)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.inner = Linear(d_model, d_ff, rng)
        self.outer = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(self.inner(x).relu())


class EncoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.norm1 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.norm2 = LayerNorm(cfg.d_model)
        self.rate = cfg.dropout

    def __call__(self, x: Tensor, training: bool, rng) -> Tensor:
        x = self.norm1(x + dropout(self.attn(x, x, x), self.rate, training, rng))
        return self.norm2(x + dropout(self.ff(x), self.rate, training, rng))


class DecoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.norm1 = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng)
        self.norm2 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.norm3 = LayerNorm(cfg.d_model)
        self.rate = cfg.dropout

    def __call__(self, x: Tensor, memory: Tensor, mask, training: bool, rng) -> Tensor:
        x = self.norm1(x + dropout(self.self_attn(x, x, x, mask), self.rate, training, rng))
        x = self.norm2(x + dropout(self.cross_attn(x, memory, memory), self.rate, training, rng))
        return self.norm3(x + dropout(self.ff(x), self.rate, training, rng))


def _batched(x) -> tuple[Tensor, bool]:
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise DimensionError(f"expected (length, features) or (batch, length, features), got {x.shape}")
    return x, False


class TransformerModel(NeuralForecaster):
    family = "transformer"

    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator | int = 0):
        if isinstance(rng, (int, np.integer)):
            rng = make_rng(int(rng))
        self.config = cfg
        d = cfg.d_model
        self.enc_input = Linear(cfg.feature_arity, d, rng)
        self.dec_input = Linear(cfg.feature_arity, d, rng)
        self.encoder = [EncoderLayer(cfg, rng) for _ in range(cfg.n_layers)]
        self.decoder = [DecoderLayer(cfg, rng) for _ in range(cfg.n_layers)]
        self.output = Linear(d, 1, rng)
        self._pe = positional_encoding(max(cfg.n_in, cfg.horizon), d)

    @staticmethod
    def parameter_count(cfg: TransformerConfig) -> int:
        d, f, ff = cfg.d_model, cfg.feature_arity, cfg.d_ff
        attn = 4 * (d * d + d)
        feed = d * ff + ff + ff * d + d
        norm = 2 * d
        enc_layer = attn + feed + 2 * norm
        dec_layer = 2 * attn + feed + 3 * norm
        return 2 * (f * d + d) + cfg.n_layers * (enc_layer + dec_layer) + d + 1

    def _embed(self, proj: Linear, x: Tensor, use_pe: bool) -> Tensor:
        if x.shape[-1] != self.config.feature_arity:
            raise DimensionError(f"expected {self.config.feature_arity} features per step, got shape {x.shape}")
        h = proj(x)
        return h + self._pe[: x.shape[1]] if use_pe else h

    def encode(self, x, training: bool = False, rng=None, use_pe: bool = True) -> Tensor:
        """(n_in, F) or (B, n_in, F) -> memory of width d_model."""
        x, single = _batched(x)
        if x.shape[1] != self.config.n_in:
            raise DimensionError(f"encoder input length {x.shape[1]} != n_in={self.config.n_in}")
        h = dropout(self._embed(self.enc_input, x, use_pe), self.config.dropout, training, rng)
        for layer in self.encoder:
            h = layer(h, training, rng)
        return h.reshape(*h.shape[1:]) if single else h

    def decode(self, decoder_input, memory, training: bool = False, rng=None,
               mask: np.ndarray | None = None) -> Tensor:
        """Decoder input (L, F) or (B, L, F) -> one prediction per position.

        Position k predicts the value one step after decoder input k.
        """
        dec, single = _batched(decoder_input)
        memory, _ = _batched(memory)
        if training and mask is None:
            raise ContractError("decode in training mode requires the look-ahead mask")
        if dec.shape[1] > self.config.horizon:
            raise DimensionError(f"decoder input length {dec.shape[1]} exceeds horizon {self.config.horizon}")
        h = dropout(self._embed(self.dec_input, dec, True), self.config.dropout, training, rng)
        for layer in self.decoder:
            h = layer(h, memory, mask, training, rng)
        out = self.output(h)
        out = out.reshape(out.shape[0], out.shape[1])
        return out.reshape(out.shape[1]) if single else out

    def __call__(self, x, decoder_input, training: bool = False, rng=None) -> Tensor:
        dec, single = _batched(decoder_input)
        memory = self.encode(x, training, rng)
        out = self.decode(dec, memory, training, rng, look_ahead_mask(dec.shape[1]))
        return out.reshape(out.shape[1]) if single else out

    def forward_batch(self, ds_inputs: np.ndarray, ds_decoder: np.ndarray, targets: np.ndarray,
                      training: bool, rng) -> Tensor:
        return self(Tensor(ds_inputs), Tensor(ds_decoder), training, rng)

    def predict_first_step(self, inputs: np.ndarray) -> np.ndarray:
        """Eval-mode one-step-ahead predictions for (S, n_in, F) windows, in scaled units."""
        with no_grad():
            x = Tensor(inputs)
            out = self(x, Tensor(inputs[:, -1:, :]))
        return out.data[:, 0].copy()

    def predict_sequence(self, inputs: np.ndarray, decoder_inputs: np.ndarray) -> np.ndarray:
        with no_grad():
            return self(Tensor(inputs), Tensor(decoder_inputs)).data.copy()


def _next_week(year: int, week: int) -> tuple[int, int]:
    return (year, week + 1) if week < 52 else (year + 1, 1)


def forecast(model: TransformerModel, history, steps: int, encoder=None, weeks=None, years=None) -> np.ndarray:
    """Autoregressive multi-step forecast from raw history.

    Decoding starts from the last observed row; each prediction is appended
    (in original units) and its feature row recomputed before the next step.
    Without an ``encoder`` the history is taken as already-scaled univariate
    values and predictions are returned scaled.
    """
    cfg = model.config
    if steps > cfg.horizon:
        raise CapabilityError(f"model decodes at most {cfg.horizon} steps, asked for {steps}")
    if steps < 1:
        raise CapabilityError("steps must be at least 1")
    values = [float(v) for v in np.asarray(history, dtype=np.float64).reshape(-1)]
    week_list = None if weeks is None else [int(w) for w in weeks]
    year_list = None if years is None else [int(y) for y in years]
    if week_list is not None and year_list is None:
        year_list = [0] * len(week_list)

    def rows_for(vals, wks):
        if encoder is None:
            return np.asarray(vals, dtype=np.float64)[:, None]
        return encoder.encode(vals, wks)

    rows = rows_for(values, week_list)
    if len(rows) < cfg.n_in:
        raise DimensionError(f"history yields {len(rows)} rows, model needs n_in={cfg.n_in}")
    x = rows[-cfg.n_in :][None]
    dec = [rows[-1]]
    preds = []
    with no_grad():
        memory = model.encode(Tensor(x))
        for k in range(steps):
            d = np.stack(dec)[None]
            out = model.decode(Tensor(d), memory, mask=look_ahead_mask(len(dec))).data[0, k]
            preds.append(out)
            if k + 1 == steps:
                break
            raw = out if encoder is None else float(encoder.value_scaler.invert(out))
            values.append(raw)
            if week_list is not None:
                y, w = _next_week(year_list[-1], week_list[-1])
                year_list.append(y)
                week_list.append(w)
            dec.append(rows_for(values, week_list)[-1])
    preds = np.asarray(preds)
    return preds if encoder is None else encoder.value_scaler.invert(preds)
