from __future__ import annotations

from ..autodiff import Tensor, as_tensor, minimum
from ..errors import ConfigError, DimensionError


def _check(pred: Tensor, target: Tensor) -> None:
    if pred.shape != target.shape:
        raise DimensionError(f"loss inputs differ in shape: {pred.shape} vs {target.shape}")


def mse_loss(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    _check(pred, target)
    err = pred - target
    return (err * err).mean()


def huber_loss(pred, target, delta: float = 1.0) -> Tensor:
    """Mean of ``0.5 e^2`` for ``|e| <= delta`` and ``delta (|e| - delta/2)`` beyond."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check(pred, target)
    a = (pred - target).abs()
    quad = minimum(a, delta)
    # 0.5*q^2 + delta*(a - q) reproduces both branches
    return (quad * quad * 0.5 + (a - quad) * delta).mean()


LOSSES = {"mse": mse_loss, "huber": huber_loss}


def get_loss(name: str):
    try:
        return LOSSES[name]
    except KeyError:
        raise ConfigError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None
