"""Weekly influenza-like-illness forecasting with a from-scratch transformer.

Subpackages: ``autodiff`` (reverse-mode tensors), ``data`` (ingestion,
features, windows), ``models`` (transformer, LSTM, Seq2Seq, ARIMA) and
``training`` (optimiser, losses, training loop, metrics).
"""

from .errors import IliformerError

__version__ = "0.1.0"

__all__ = ["IliformerError", "__version__"]
