"""Central-difference oracle for analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def finite_difference_check(
    f: Callable,
    x: Tensor | Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare backprop gradients of scalar ``f(x)`` with central differences.

    ``x`` may be one tensor or a list of tensors (for example all model
    parameters); ``f`` is called with ``x`` exactly as passed.  Returns
    ``max |analytic - numeric| / max(1, |analytic|)`` over the checked
    coordinates.  With ``max_coords`` set, that many coordinates are drawn
    per tensor using ``rng``.
    """
    tensors = [x] if isinstance(x, Tensor) else list(x)
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    backward(f(x))
    worst = 0.0
    for t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        coords = np.arange(t.size)
        if max_coords is not None and t.size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(t.size, size=max_coords, replace=False)
        flat = t.data.reshape(-1)
        for i in coords:
            original = flat[i]
            with no_grad():
                flat[i] = original + h
                up = f(x).item()
                flat[i] = original - h
                down = f(x).item()
            flat[i] = original
            numeric = (up - down) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
