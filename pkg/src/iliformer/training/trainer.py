"""Minibatch training loop and one-step-ahead evaluation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..autodiff import backward, no_grad
from ..errors import ConfigError, DivergenceError, NonFiniteError, PoisonedGradientError, ReportError
from ..rng import make_rng
from .losses import get_loss
from .metrics import EvalReport, build_report
from .optim import BASELINE_ADAM, TRANSFORMER_ADAM, Adam, ConstantSchedule, WarmupSchedule


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    loss: str = "mse"
    # None selects the warmup schedule (transformer default)
    learning_rate: float | None = None
    warmup_steps: int = 5000
    patience: int = 20
    validation_fraction: float = 0.1
    seed: int = 0
    beta1: float | None = None
    beta2: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0 (0 disables early stopping)")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be positive")
        get_loss(self.loss)

    def to_dict(self) -> dict:
        return asdict(self)


def family_defaults(family: str) -> dict:
    """Loss and learning rate each model family is trained with unless overridden."""
    if family == "transformer":
        return {"loss": "mse", "learning_rate": None}
    return {"loss": "huber", "learning_rate": 0.02}


@dataclass
class TrainResult:
    loss_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    steps: int = 0
    stopped_early: bool = False

    def loss_csv(self) -> str:
        lines = ["epoch,loss"]
        lines += [f"{i + 1},{v!r}" for i, v in enumerate(self.loss_curve)]
        return "\n".join(lines) + "\n"


def validation_split(dataset, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Per region, the last ``ceil(fraction * n)`` windows (in time order) form the validation slice."""
    n = len(dataset)
    if fraction <= 0 or n < 2:
        return np.arange(n), np.zeros(0, dtype=np.int64)
    val = []
    for region in dataset.region_names():
        idx = np.flatnonzero(dataset.regions == region)
        idx = idx[np.argsort(dataset.target_index[idx], kind="stable")]
        k = min(len(idx) - 1, math.ceil(fraction * len(idx)))
        if k > 0:
            val.append(idx[-k:])
    val_idx = np.sort(np.concatenate(val)) if val else np.zeros(0, dtype=np.int64)
    train_idx = np.setdiff1d(np.arange(n), val_idx)
    return train_idx, val_idx


def make_optimizer(model, cfg: TrainConfig) -> Adam:
    family = getattr(model, "family", "")
    base = dict(TRANSFORMER_ADAM if family == "transformer" else BASELINE_ADAM)
    for key in ("beta1", "beta2", "eps"):
        if getattr(cfg, key) is not None:
            base[key] = getattr(cfg, key)
    if cfg.learning_rate is None:
        d_model = getattr(model.config, "d_model", None)
        if d_model is None:
            raise ConfigError(f"the warmup schedule needs a d_model; set learning_rate for {family}")
        schedule = WarmupSchedule(d_model, cfg.warmup_steps)
    else:
        schedule = ConstantSchedule(cfg.learning_rate)
    return Adam(model.named_parameters(), schedule, **base)


def dataset_loss(model, ds, loss_name: str, batch_size: int = 512) -> float:
    """Eval-mode mean loss over ``ds`` (sample weighted)."""
    loss_fn = get_loss(loss_name)
    dec = ds.decoder_inputs()
    total = 0.0
    with no_grad():
        for start in range(0, len(ds), batch_size):
            sl = slice(start, start + batch_size)
            pred = model.forward_batch(ds.inputs[sl], dec[sl], ds.targets[sl], False, None)
            total += float(loss_fn(pred, ds.targets[sl]).data) * len(ds.targets[sl])
    return total / len(ds)


def train(model, dataset, config: TrainConfig | None = None, progress=None) -> TrainResult:
    """Fit ``model`` on ``dataset`` in place.

    Each epoch shuffles the training windows with a seeded generator and
    walks them in minibatches, keeping the final partial batch.  With early
    stopping enabled the parameters from the best validation epoch are
    restored at the end.  A non-finite loss or gradient restores the last
    completed epoch and raises ``DivergenceError`` carrying that state.
    """
    cfg = config or TrainConfig()
    if len(dataset) == 0:
        raise ConfigError("cannot train on an empty dataset")
    loss_fn = get_loss(cfg.loss)
    opt = make_optimizer(model, cfg)
    shuffle_rng = make_rng(cfg.seed, 1)
    drop_rng = make_rng(cfg.seed, 2)

    early = cfg.patience > 0 and cfg.validation_fraction > 0
    train_idx, val_idx = validation_split(dataset, cfg.validation_fraction if early else 0.0)
    if len(val_idx) == 0:
        early = False
    fit_ds = dataset.subset(train_idx)
    val_ds = dataset.subset(val_idx) if early else None
    dec_all = fit_ds.decoder_inputs()

    result = TrainResult()
    last_good = model.state_dict()
    best_val, best_state, waited = math.inf, None, 0
    n = len(fit_ds)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        try:
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                model.zero_grad()
                pred = model.forward_batch(fit_ds.inputs[idx], dec_all[idx], fit_ds.targets[idx], True, drop_rng)
                loss = loss_fn(pred, fit_ds.targets[idx])
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NonFiniteError(f"loss is {value}")
                backward(loss)
                opt.step()
                result.steps += 1
                total += value * len(idx)
        except (NonFiniteError, PoisonedGradientError) as exc:
            model.load_state_dict(last_good)
            raise DivergenceError(f"training diverged in epoch {epoch + 1}: {exc}", last_good=last_good,
                                  epoch=epoch + 1) from None
        result.loss_curve.append(total / n)
        last_good = model.state_dict()
        if progress is not None:
            progress(epoch + 1, result.loss_curve[-1])
        if early:
            v = dataset_loss(model, val_ds, cfg.loss)
            result.val_curve.append(v)
            if v < best_val:
                best_val, best_state, waited = v, last_good, 0
                result.best_epoch = epoch + 1
            else:
                waited += 1
                if waited >= cfg.patience:
                    result.stopped_early = True
                    break
    if early and best_state is not None:
        model.load_state_dict(best_state)
    model.zero_grad()
    return result


def _invert(values: np.ndarray, regions: np.ndarray, encoders) -> np.ndarray:
    out = np.empty_like(values, dtype=np.float64)
    for region in dict.fromkeys(regions.tolist()):
        idx = np.flatnonzero(regions == region)
        enc = encoders[region] if isinstance(encoders, dict) else encoders
        out[idx] = enc.value_scaler.invert(values[idx])
    return out


def evaluate_one_step(model, test, encoders, histories=None) -> EvalReport:
    """One-step-ahead predictions on ``test``, scored per region in original units.

    ``encoders`` is one ``FeatureEncoder`` or a dict of them by region;
    they undo the value scaling of targets and of scaled model outputs.
    Models reporting ``output_units == "original"`` (ARIMA) also need
    ``histories``: the raw series of each region.
    """
    if len(test) == 0:
        raise ReportError("cannot evaluate on an empty test set")
    actual = _invert(test.targets[:, 0], test.regions, encoders)
    if getattr(model, "output_units", "scaled") == "original":
        if histories is None:
            raise ConfigError(f"{model.family} evaluation needs the raw region histories")
        predicted = model.predict_dataset(test, histories)
    else:
        predicted = _invert(model.predict_dataset(test), test.regions, encoders)
    return build_report(test.regions, test.target_year, test.target_week, actual, predicted)


def evaluate_prepared(model, prepared) -> EvalReport:
    encoders = {r.region: r.encoder for r in prepared.regions}
    histories = {r.region: r.series.values for r in prepared.regions}
    return evaluate_one_step(model, prepared.test, encoders, histories)
