from .arima import ArimaForecaster, ArimaSpec, arima_fit, arima_forecast, arima_order_sweep
from .base import NeuralForecaster
from .checkpoint import load_checkpoint, save_checkpoint
from .lstm import LstmConfig, LstmForecaster
from .registry import FAMILIES, build_model, config_from_dict
from .seq2seq import Seq2SeqConfig, Seq2SeqForecaster, bahdanau_attention
from .transformer import TransformerConfig, TransformerModel, forecast

__all__ = [
    "FAMILIES",
    "ArimaForecaster",
    "ArimaSpec",
    "LstmConfig",
    "LstmForecaster",
    "NeuralForecaster",
    "Seq2SeqConfig",
    "Seq2SeqForecaster",
    "TransformerConfig",
    "TransformerModel",
    "arima_fit",
    "arima_forecast",
    "arima_order_sweep",
    "bahdanau_attention",
    "build_model",
    "config_from_dict",
    "forecast",
    "load_checkpoint",
    "save_checkpoint",
]
