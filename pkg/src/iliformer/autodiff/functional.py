"""Fused differentiable operations used by the models."""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from ..errors import DimensionError, ParameterError
from .tensor import Tensor, as_tensor

LAYER_NORM_EPS = 1e-6


def softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is a boolean array broadcastable to ``x``; ``False`` cells are
    treated as ``-inf`` before normalisation and receive weight exactly 0.
    Every slice must keep at least one permitted cell.
    """
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"softmax over an empty axis (shape {x.shape})")
    logits = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise DimensionError("softmax mask leaves a slice with no permitted cells")
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(out, "softmax", (x,), bw)


def layer_norm(x, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise each vector along the last axis, then apply gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if d < 1 or gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: input {x.shape} with gain {gain.shape} and bias {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        gx_hat = g * gain.data
        gx = inv_std * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._from_op(out, "layer_norm", (x, gain, bias), bw)


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` at train time."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs an explicit generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor._from_op(x.data * keep, "dropout", (x,), lambda g: (g * keep,))


def linear_recurrence(u, coeffs) -> Tensor:
    """Solve ``e[t] = u[t] - sum_j coeffs[j-1] * e[t-j]`` with zero pre-sample.

    This is the moving-average inversion used by conditional-sum-of-squares
    estimation.  ``u`` is 1-D of length n, ``coeffs`` is 1-D of length q.
    The adjoint is the same filter run backwards in time.
    """
    u, coeffs = as_tensor(u), as_tensor(coeffs)
    if u.ndim != 1 or coeffs.ndim != 1:
        raise DimensionError(f"linear_recurrence expects 1-D inputs, got {u.shape} and {coeffs.shape}")
    q = coeffs.shape[0]
    if q == 0:
        return u
    denom = np.concatenate(([1.0], coeffs.data))
    with np.errstate(over="ignore", invalid="ignore"):
        out = lfilter([1.0], denom, u.data)

    def bw(g):
        lam = lfilter([1.0], denom, g[::-1])[::-1]
        n = len(out)
        gc = np.array([-np.dot(lam[j:], out[: n - j]) for j in range(1, q + 1)])
        return lam, gc

    return Tensor._from_op(out, "linear_recurrence", (u, coeffs), bw)
