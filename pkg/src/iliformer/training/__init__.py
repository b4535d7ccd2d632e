from .losses import LOSSES, get_loss, huber_loss, mse_loss
from .metrics import EvalReport, RegionMetrics, build_report, pearson, rmse
from .optim import (
    BASELINE_ADAM,
    TRANSFORMER_ADAM,
    Adam,
    AdamState,
    ConstantSchedule,
    WarmupSchedule,
    adam_step,
    lr_at_step,
)
from .trainer import (
    TrainConfig,
    TrainResult,
    evaluate_one_step,
    evaluate_prepared,
    family_defaults,
    train,
    validation_split,
)

__all__ = [
    "BASELINE_ADAM",
    "LOSSES",
    "TRANSFORMER_ADAM",
    "Adam",
    "AdamState",
    "ConstantSchedule",
    "EvalReport",
    "RegionMetrics",
    "TrainConfig",
    "TrainResult",
    "WarmupSchedule",
    "adam_step",
    "build_report",
    "evaluate_one_step",
    "evaluate_prepared",
    "family_defaults",
    "get_loss",
    "huber_loss",
    "lr_at_step",
    "mse_loss",
    "pearson",
    "rmse",
    "train",
    "validation_split",
]
