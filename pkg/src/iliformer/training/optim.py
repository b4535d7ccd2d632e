"""Adam and the inverse-square-root warmup schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..errors import ConfigError, DomainError, PoisonedGradientError


@dataclass(frozen=True)
class WarmupSchedule:
    d_model: int
    warmup_steps: int = 5000

    def __post_init__(self):
        if self.d_model < 1 or self.warmup_steps < 1:
            raise ConfigError("warmup schedule needs positive d_model and warmup_steps")

    def __call__(self, step: int) -> float:
        return lr_at_step(step, self)


def lr_at_step(step: int, sched: WarmupSchedule) -> float:
    """``d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)``.

    Linear ramp up to ``warmup_steps``, inverse square-root decay after.
    """
    if step < 1:
        raise DomainError(f"learning-rate schedule is defined for step >= 1, got {step}")
    return sched.d_model**-0.5 * min(step**-0.5, step * sched.warmup_steps**-1.5)


@dataclass(frozen=True)
class ConstantSchedule:
    lr: float

    def __call__(self, step: int) -> float:
        return self.lr


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params], v=[np.zeros_like(p.data) for p in params], **kw)


TRANSFORMER_ADAM = {"beta1": 0.9, "beta2": 0.98, "eps": 1e-9}
BASELINE_ADAM = {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8}


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], state: AdamState, lr: float,
              names: list[str] | None = None) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    A missing gradient counts as zero.  Non-finite gradients raise before
    anything is modified.
    """
    gs = []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p.data) if g is None else g
        if not np.all(np.isfinite(g)):
            raise PoisonedGradientError(names[i] if names else f"#{i}")
        gs.append(g)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr != 0.0:
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    """Adam bound to a parameter list and a learning-rate schedule."""

    def __init__(self, named_params, schedule, beta1=0.9, beta2=0.999, eps=1e-8):
        named_params = list(named_params)
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.schedule = schedule
        self.state = AdamState.for_params(self.params, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.schedule(self.state.t + 1)

    def step(self) -> float:
        lr = self.lr
        adam_step(self.params, [p.grad for p in self.params], self.state, lr, self.names)
        return lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

