"""LSTM and GRU cells and single-layer unrolled recurrences."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, concat, dropout
from ..autodiff.nn import Module, glorot
from ..errors import DimensionError


class LstmLayer(Module):
    """Gate weights act on ``[h_{t-1}, x_t]``; columns are ordered forget, input, candidate, output."""

    def __init__(self, input_size: int, hidden: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden = hidden
        self.weight = Tensor(glorot(rng, hidden + input_size, 4 * hidden), requires_grad=True)
        bias = np.zeros(4 * hidden)
        bias[:hidden] = 1.0
        self.bias = Tensor(bias, requires_grad=True)

    def run(self, inputs: list[Tensor], training: bool = False, rate: float = 0.0, rng=None) -> list[Tensor]:
        batch = inputs[0].shape[0]
        h = Tensor(np.zeros((batch, self.hidden)))
        c = Tensor(np.zeros((batch, self.hidden)))
        outputs = []
        for x_t in inputs:
            h, c, _ = lstm_cell(x_t, h, c, self)
            outputs.append(dropout(h, rate, training, rng))
        return outputs


def lstm_cell(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmLayer) -> tuple[Tensor, Tensor, Tensor]:
    """One LSTM step; returns ``(h_t, C_t, y_t)`` where ``y_t`` is the output gate.

    f = s(W_f [h, x] + b_f), i = s(W_i [h, x] + b_i), C~ = tanh(W_C [h, x] + b_C),
    C = f*C_prev + i*C~, y = s(W_y [h, x] + b_y), h = y*tanh(C).
    """
    hdim = params.hidden
    if x_t.shape[-1] != params.input_size or h_prev.shape[-1] != hdim or c_prev.shape != h_prev.shape:
        raise DimensionError(
            f"lstm_cell: x {x_t.shape}, h {h_prev.shape}, C {c_prev.shape} for input {params.input_size}, hidden {hdim}"
        )
    z = concat([h_prev, x_t], axis=-1) @ params.weight + params.bias
    f = z[..., :hdim].sigmoid()
    i = z[..., hdim : 2 * hdim].sigmoid()
    cand = z[..., 2 * hdim : 3 * hdim].tanh()
    y = z[..., 3 * hdim :].sigmoid()
    c = f * c_prev + i * cand
    h = y * c.tanh()
    return h, c, y


class GruLayer(Module):
    """Update/reset/candidate columns in that order; ``h = z*h_prev + (1-z)*candidate``."""

    def __init__(self, input_size: int, hidden: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden = hidden
        self.w = Tensor(glorot(rng, input_size, 3 * hidden), requires_grad=True)
        self.u = Tensor(glorot(rng, hidden, 3 * hidden), requires_grad=True)
        self.bias = Tensor(np.zeros(3 * hidden), requires_grad=True)

    def initial_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden)))

    def run(self, inputs: list[Tensor], h: Tensor | None = None, training: bool = False,
            rate: float = 0.0, rng=None) -> tuple[list[Tensor], Tensor]:
        h = self.initial_state(inputs[0].shape[0]) if h is None else h
        outputs = []
        for x_t in inputs:
            h = gru_cell(x_t, h, self)
            outputs.append(dropout(h, rate, training, rng))
        return outputs, h


def gru_cell(x_t: Tensor, h_prev: Tensor, params: GruLayer) -> Tensor:
    hdim = params.hidden
    if x_t.shape[-1] != params.input_size or h_prev.shape[-1] != hdim:
        raise DimensionError(f"gru_cell: x {x_t.shape}, h {h_prev.shape} for input {params.input_size}, hidden {hdim}")
    xw = x_t @ params.w + params.bias
    hu = h_prev @ params.u[:, : 2 * hdim]
    z = (xw[..., :hdim] + hu[..., :hdim]).sigmoid()
    r = (xw[..., hdim : 2 * hdim] + hu[..., hdim:]).sigmoid()
    cand = (xw[..., 2 * hdim :] + (r * h_prev) @ params.u[:, 2 * hdim :]).tanh()
    return z * h_prev + (1.0 - z) * cand


def unstack_time(x: Tensor) -> list[Tensor]:
    """(B, L, F) -> L tensors of shape (B, F)."""
    return [x[:, t, :] for t in range(x.shape[1])]
