"""Model families by name."""

from __future__ import annotations

from ..errors import ConfigError
from .arima import ArimaForecaster, ArimaSpec
from .lstm import LstmConfig, LstmForecaster
from .seq2seq import Seq2SeqConfig, Seq2SeqForecaster
from .transformer import TransformerConfig, TransformerModel

FAMILIES = ("arima", "lstm", "seq2seq", "transformer")

_CONFIGS = {
    "arima": ArimaSpec,
    "lstm": LstmConfig,
    "seq2seq": Seq2SeqConfig,
    "transformer": TransformerConfig,
}
_MODELS = {
    "lstm": LstmForecaster,
    "seq2seq": Seq2SeqForecaster,
    "transformer": TransformerModel,
}


def check_family(family: str) -> str:
    if family not in FAMILIES:
        raise ConfigError(f"unknown model family {family!r}; valid families: {', '.join(FAMILIES)}")
    return family


def config_from_dict(family: str, values: dict):
    cls = _CONFIGS[check_family(family)]
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad {family} configuration: {exc}") from None


def config_to_dict(family: str, cfg) -> dict:
    if family == "arima":
        return {"p": cfg.p, "d": cfg.d, "q": cfg.q, "constant": cfg.constant}
    return cfg.to_dict()


def build_model(family: str, cfg, seed: int = 0, **kw):
    """Fresh model of ``family``; neural weights are drawn from ``seed``."""
    check_family(family)
    if family == "arima":
        return ArimaForecaster(cfg, seed=seed, **kw)
    return _MODELS[family](cfg, seed)
