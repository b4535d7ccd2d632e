"""Per-timestep feature vectors: raw value, week number, differences, delay embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, LengthError

WEEK_DIVISOR = 53.0


@dataclass(frozen=True)
class TdeConfig:
    dimension: int
    lag: int = 1

    def __post_init__(self):
        if self.dimension < 1 or self.lag < 1:
            raise ConfigError(f"TDE needs dimension >= 1 and lag >= 1, got d={self.dimension}, tau={self.lag}")

    @property
    def lookback(self) -> int:
        return (self.dimension - 1) * self.lag


def make_tde(values, cfg: TdeConfig) -> np.ndarray:
    """Rows ``(x_t, x_{t-tau}, ..., x_{t-(d-1)tau})`` for every t >= (d-1)tau."""
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if cfg.dimension * cfg.lag > n:
        raise LengthError(f"TDE d={cfg.dimension}, tau={cfg.lag} needs at least {cfg.dimension * cfg.lag} points, got {n}")
    start = cfg.lookback
    cols = [x[start - j * cfg.lag : n - j * cfg.lag] for j in range(cfg.dimension)]
    return np.stack(cols, axis=1)


def differences(values) -> tuple[np.ndarray, np.ndarray]:
    """First and second differences aligned to the series; undefined leads are NaN."""
    x = np.asarray(values, dtype=np.float64)
    d1 = np.full_like(x, np.nan)
    d2 = np.full_like(x, np.nan)
    d1[1:] = np.diff(x)
    d2[2:] = np.diff(d1[1:])
    return d1, d2


@dataclass(frozen=True)
class FeatureSpec:
    """Which columns make up a timestep vector.

    Column order is fixed: value (or the delay embedding, whose first
    component is the value), then week number, then first and second
    differences.
    """

    week: bool = False
    diffs: bool = False
    tde: TdeConfig | None = None

    @classmethod
    def parse(cls, text: str) -> "FeatureSpec":
        """Parse ``none``, ``week+diffs``, ``tde:8,1`` or ``+``-joined combinations."""
        text = (text or "none").strip().lower()
        if text in ("", "none", "value"):
            return cls()
        week = diffs = False
        tde = None
        for token in text.split("+"):
            token = token.strip()
            if token == "week":
                week = True
            elif token in ("diffs", "diff"):
                diffs = True
            elif token.startswith("tde:"):
                parts = token[4:].split(",")
                try:
                    d = int(parts[0])
                    tau = int(parts[1]) if len(parts) > 1 else 1
                except (ValueError, IndexError):
                    raise ConfigError(f"bad TDE feature {token!r}; expected tde:d,tau") from None
                tde = TdeConfig(d, tau)
            else:
                raise ConfigError(f"unknown feature {token!r}; expected none, week, diffs or tde:d,tau")
        return cls(week=week, diffs=diffs, tde=tde)

    def __str__(self) -> str:
        tokens = []
        if self.tde is not None:
            tokens.append(f"tde:{self.tde.dimension},{self.tde.lag}")
        if self.week:
            tokens.append("week")
        if self.diffs:
            tokens.append("diffs")
        return "+".join(tokens) or "none"

    @property
    def names(self) -> tuple[str, ...]:
        if self.tde is not None:
            names = ["value"] + [f"lag{j * self.tde.lag}" for j in range(1, self.tde.dimension)]
        else:
            names = ["value"]
        if self.week:
            names.append("week")
        if self.diffs:
            names += ["diff1", "diff2"]
        return tuple(names)

    @property
    def arity(self) -> int:
        return len(self.names)

    @property
    def lookback(self) -> int:
        """Leading timesteps dropped because a feature is undefined there."""
        lead = 2 if self.diffs else 0
        return max(lead, self.tde.lookback if self.tde is not None else 0)


def make_features(values, weeks=None, spec: FeatureSpec | None = None) -> np.ndarray:
    """Feature rows for timesteps ``spec.lookback .. n-1``.

    Leading timesteps where a difference or lag is undefined are dropped,
    never zero-filled.  Week numbers are mapped to ``week / 53``.
    """
    spec = spec or FeatureSpec()
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    start = spec.lookback
    if spec.diffs and n < 3:
        raise LengthError(f"differences need at least 3 points, got {n}")
    if n <= start:
        raise LengthError(f"feature spec {spec} needs more than {start} points, got {n}")
    if spec.tde is not None:
        emb = make_tde(x, spec.tde)
        cols = [emb[start - spec.tde.lookback :]]
    else:
        cols = [x[start:, None]]
    if spec.week:
        if weeks is None:
            raise ConfigError("week feature requested but no week numbers supplied")
        w = np.asarray(weeks, dtype=np.float64)
        cols.append((w / WEEK_DIVISOR)[start:, None])
    if spec.diffs:
        d1, d2 = differences(x)
        cols.append(np.stack([d1[start:], d2[start:]], axis=1))
    return np.concatenate(cols, axis=1)
