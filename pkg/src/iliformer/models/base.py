from __future__ import annotations

import numpy as np

from ..autodiff.nn import Module

EVAL_BATCH = 512


class NeuralForecaster(Module):
    """Shared evaluation entry point for the trainable models.

    Subclasses provide ``forward_batch`` (used by the trainer) and
    ``predict_first_step`` for (S, n_in, F) windows.
    """

    family = "neural"

    def predict_dataset(self, dataset) -> np.ndarray:
        inputs = dataset.inputs
        if len(inputs) == 0:
            return np.zeros(0)
        parts = [self.predict_first_step(inputs[i : i + EVAL_BATCH]) for i in range(0, len(inputs), EVAL_BATCH)]
        return np.concatenate(parts)
