"""Command-line entry point: train, evaluate, forecast, tde-sweep, compare.

Settings come from defaults, then an optional flat ``key = value`` file
(``--config``), then command-line flags; later sources win.  Every run
writes a ``config.txt`` snapshot that can be fed back through ``--config``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.  Failures
print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .data import FeatureEncoder, FeatureSpec, PipelineConfig, ingest_csv, prepare
from .errors import CapabilityError, ConfigError, IliformerError
from .models import ArimaSpec, LstmConfig, Seq2SeqConfig, TransformerConfig
from .models.arima import arima_forecast
from .models.checkpoint import load_checkpoint, save_checkpoint
from .models.registry import FAMILIES, build_model, check_family
from .models.transformer import _next_week, forecast
from .rng import derive_seed
from .training import TrainConfig, evaluate_prepared, train

WORKERS_ENV = "ILIFORMER_WORKERS"
VERBS = ("train", "evaluate", "forecast", "tde-sweep", "compare")
COMPARE_ORDER = ("arima", "lstm", "seq2seq", "transformer")


def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "none", "schedule") else float(s)


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    if isinstance(s, (list, tuple)):
        return tuple(int(v) for v in s)
    return tuple(int(v) for v in str(s).split(",") if v.strip())


def _str(s):
    return str(s).strip()


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    help: str


KEYS: dict[str, Key] = {
    "data": Key(_str, None, "input CSV with region,year,week,value columns"),
    "model": Key(_str, "transformer", f"model family: {', '.join(FAMILIES)}"),
    "checkpoint": Key(_str, None, "checkpoint to evaluate or forecast from"),
    "missing": Key(_str, "error", "missing weeks: error or interpolate"),
    "n_in": Key(_int, 10, "input window length"),
    "horizon": Key(_int, 4, "number of future weeks per sample"),
    "features": Key(_str, "none", "none | week+diffs | tde:d,tau"),
    "test_context": Key(_str, "train_tail", "train_tail or test_only"),
    "epochs": Key(_int, 200, "training epochs"),
    "batch_size": Key(_int, 64, "minibatch size"),
    "loss": Key(_str, "mse", "transformer loss: mse or huber"),
    "learning_rate": Key(_opt_float, None, "transformer learning rate; none uses the warmup schedule"),
    "warmup_steps": Key(_int, 5000, "warmup steps of the transformer schedule"),
    "patience": Key(_int, 20, "early-stopping patience in epochs; 0 disables"),
    "validation_fraction": Key(_float, 0.1, "per-region tail of training windows used for validation"),
    "baseline_loss": Key(_str, "huber", "LSTM/Seq2Seq loss"),
    "baseline_learning_rate": Key(_float, 0.02, "LSTM/Seq2Seq learning rate"),
    "d_model": Key(_int, 64, "transformer width"),
    "n_heads": Key(_int, 4, "attention heads"),
    "n_layers": Key(_int, 4, "encoder and decoder layers"),
    "d_ff": Key(_int, 256, "feed-forward width"),
    "dropout": Key(_float, 0.2, "dropout rate of all neural models"),
    "lstm_units": Key(_int_list, (32, 16), "LSTM layer sizes, comma separated"),
    "dense_units": Key(_int, 16, "Seq2Seq dense width"),
    "gru_units": Key(_int, 32, "Seq2Seq GRU width"),
    "teacher_forcing": Key(_bool, True, "Seq2Seq teacher forcing during training"),
    "arima_p": Key(_int, 3, "ARIMA AR order"),
    "arima_d": Key(_int, 0, "ARIMA differencing order"),
    "arima_q": Key(_int, 3, "ARIMA MA order"),
    "arima_constant": Key(_bool, True, "ARIMA constant term"),
    "arima_starts": Key(_int, 8, "ARIMA optimisation starts"),
    "steps": Key(_int, 4, "forecast steps"),
    "dims": Key(_int_list, (2, 4, 6, 8, 16, 32), "TDE dimensions for tde-sweep"),
    "tau": Key(_int, 1, "TDE lag for tde-sweep"),
    "seed": Key(_int, 0, "random seed"),
}


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def resolve(file_values: dict, flag_values: dict) -> tuple[dict, set]:
    """Merge defaults, file and flags; returns (settings, keys set explicitly)."""
    settings = {k: spec.default for k, spec in KEYS.items()}
    explicit = set()
    for source in (file_values, flag_values):
        for key, raw in source.items():
            if raw is None:
                continue
            try:
                settings[key] = KEYS[key].parse(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
            explicit.add(key)
    return settings, explicit


def snapshot(settings: dict) -> str:
    return "".join(f"{k} = {_fmt(settings[k])}\n" for k in sorted(settings))


# -- configuration objects -------------------------------------------------


def pipeline_config(s: dict, features: str | None = None) -> PipelineConfig:
    if s["missing"] not in ("error", "interpolate"):
        raise ConfigError(f"missing must be error or interpolate, got {s['missing']!r}")
    return PipelineConfig(n_in=s["n_in"], horizon=s["horizon"],
                          features=FeatureSpec.parse(features or s["features"]),
                          test_context=s["test_context"])


def model_config(family: str, s: dict, pcfg: PipelineConfig):
    check_family(family)
    arity = pcfg.features.arity
    if family == "transformer":
        return TransformerConfig(d_model=s["d_model"], n_heads=s["n_heads"], n_layers=s["n_layers"], d_ff=s["d_ff"],
                                 dropout=s["dropout"], n_in=pcfg.n_in, horizon=pcfg.horizon, feature_arity=arity)
    if family == "lstm":
        return LstmConfig(units=s["lstm_units"], horizon=pcfg.horizon, dropout=s["dropout"],
                          learning_rate=s["baseline_learning_rate"], n_in=pcfg.n_in, feature_arity=arity)
    if family == "seq2seq":
        return Seq2SeqConfig(dense_units=s["dense_units"], gru_units=s["gru_units"], horizon=pcfg.horizon,
                             dropout=s["dropout"], learning_rate=s["baseline_learning_rate"],
                             teacher_forcing=s["teacher_forcing"], n_in=pcfg.n_in, feature_arity=arity)
    if s["arima_starts"] < 1:
        raise ConfigError("arima_starts must be at least 1")
    return ArimaSpec(s["arima_p"], s["arima_d"], s["arima_q"], s["arima_constant"])


def train_config(family: str, s: dict) -> TrainConfig:
    if family == "transformer":
        loss, lr = s["loss"], s["learning_rate"]
    else:
        loss, lr = s["baseline_loss"], s["baseline_learning_rate"]
    return TrainConfig(epochs=s["epochs"], batch_size=s["batch_size"], loss=loss, learning_rate=lr,
                       warmup_steps=s["warmup_steps"], patience=s["patience"],
                       validation_fraction=s["validation_fraction"], seed=derive_seed(s["seed"], 1))


def _pipeline_dict(pcfg: PipelineConfig, missing: str) -> dict:
    return {"n_in": pcfg.n_in, "horizon": pcfg.horizon, "features": str(pcfg.features),
            "test_context": pcfg.test_context, "missing": missing}


def workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def _run_jobs(fn, jobs: list) -> list:
    n = min(workers(), len(jobs))
    if n <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


# -- shared work -----------------------------------------------------------


def load_series(s: dict):
    if not s["data"]:
        raise ConfigError("no data file given (set data or --data)")
    return ingest_csv(s["data"], missing=s["missing"])


def prepared_or_fail(series, pcfg):
    prep = prepare(series, pcfg)
    if not prep.regions:
        reasons = "; ".join(f"{name}: {why}" for name, why in prep.dropped)
        raise IliformerError(f"no region has enough data for training and testing ({reasons})")
    return prep


def fit_model(family: str, s: dict, prep):
    """Build and fit one model; returns (model, train result or None)."""
    cfg = model_config(family, s, prep.config)
    if family == "arima":
        model = build_model("arima", cfg, s["seed"], starts=s["arima_starts"])
        model.fit((r.region, r.series.values[: r.n_train]) for r in prep.regions)
        return model, None
    model = build_model(family, cfg, derive_seed(s["seed"], 0))
    result = train(model, prep.train, train_config(family, s))
    return model, result


def _checkpoint_extra(prep, s: dict) -> dict:
    return {
        "pipeline": _pipeline_dict(prep.config, s["missing"]),
        "encoders": {r.region: r.encoder.to_dict() for r in prep.regions},
    }


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text, encoding="utf-8", newline="\n")


def _evaluate_job(job: dict) -> dict:
    """Train one family on one feature setting and score it; never raises."""
    s, family, series = job["settings"], job["family"], job["series"]
    try:
        pcfg = pipeline_config(s, job.get("features"))
        prep = prepared_or_fail(series, pcfg)
        model, _ = fit_model(family, s, prep)
        report = evaluate_prepared(model, prep)
        return {"pearson": report.mean_pearson, "rmse": report.mean_rmse, "error": "",
                "series": report.series_csv(), "metrics": report.metrics_csv()}
    except IliformerError as exc:
        return {"pearson": math.nan, "rmse": math.nan, "error": f"{type(exc).__name__}: {exc}"}


# -- verbs -----------------------------------------------------------------


def cmd_train(s: dict, explicit: set, out: Path) -> str:
    family = check_family(s["model"])
    pcfg = pipeline_config(s)
    model_config(family, s, pcfg)
    if family != "arima":
        train_config(family, s)
    prep = prepared_or_fail(load_series(s), pcfg)
    model, result = fit_model(family, s, prep)
    save_checkpoint(out / "checkpoint.ckpt", model, _checkpoint_extra(prep, s))
    lines = [prep.manifest(), f"model = {family}\n"]
    if result is not None:
        lines.append(f"train.steps = {result.steps}\n")
        lines.append(f"train.epochs_run = {len(result.loss_curve)}\n")
        lines.append(f"train.best_epoch = {_fmt(result.best_epoch)}\n")
        lines.append(f"params = {model.num_parameters()}\n")
    _write(out, "manifest.txt", "".join(lines))
    _write(out, "loss.csv", result.loss_csv() if result is not None else "epoch,loss\n")
    if family == "arima":
        _write(out, "arima.txt", model.to_text())
    final = result.loss_curve[-1] if result is not None and result.loss_curve else None
    return f"trained {family} on {len(prep.regions)} region(s); final loss {_fmt(final)}"


def _load_for_data(s: dict, explicit: set):
    if not s["checkpoint"]:
        raise ConfigError("no checkpoint given (set checkpoint or --checkpoint)")
    model, extra = load_checkpoint(s["checkpoint"])
    stored = extra["pipeline"]
    for key in ("n_in", "horizon", "features", "test_context", "missing"):
        if key in explicit and _fmt(s[key]) != _fmt(stored[key]):
            raise ConfigError(f"{key}={_fmt(s[key])} does not match the checkpoint ({stored[key]})")
    settings = dict(s, **{k: stored[k] for k in ("n_in", "horizon", "features", "test_context", "missing")})
    pcfg = pipeline_config(settings)
    arity = getattr(model.config, "feature_arity", pcfg.features.arity)
    if arity != pcfg.features.arity:
        raise ConfigError(f"checkpoint model expects {arity} features per step, pipeline yields {pcfg.features.arity}")
    return model, extra, settings, pcfg


def _check_encoders(prep, extra: dict) -> dict[str, FeatureEncoder]:
    stored = extra["encoders"]
    encoders = {}
    for r in prep.regions:
        if r.region not in stored:
            raise ConfigError(f"region {r.region!r} was not part of the checkpoint's training data")
        if r.encoder.to_dict() != stored[r.region]:
            raise ConfigError(f"region {r.region!r}: training segment differs from the checkpoint's (scaler mismatch)")
        encoders[r.region] = FeatureEncoder.from_dict(stored[r.region])
    return encoders


def cmd_evaluate(s: dict, explicit: set, out: Path) -> str:
    model, extra, settings, pcfg = _load_for_data(s, explicit)
    prep = prepared_or_fail(load_series(settings), pcfg)
    _check_encoders(prep, extra)
    report = evaluate_prepared(model, prep)
    _write(out, "metrics.csv", report.metrics_csv())
    _write(out, "predictions.csv", report.series_csv())
    _write(out, "summary.txt", report.summary())
    return f"mean pearson {report.mean_pearson:.4f}, mean rmse {report.mean_rmse:.4f}"


def cmd_forecast(s: dict, explicit: set, out: Path) -> str:
    model, extra, settings, pcfg = _load_for_data(s, explicit)
    steps = s["steps"]
    if steps < 1:
        raise ConfigError("steps must be at least 1")
    series = load_series(settings)
    encoders = extra["encoders"]
    rows = ["region,year,week,step,predicted"]
    for ser in series:
        if ser.region not in encoders:
            continue
        values, weeks, years = ser.values, ser.weeks, ser.years
        if model.family == "arima":
            preds = arima_forecast(model.fits[ser.region], values, steps)
        else:
            enc = FeatureEncoder.from_dict(encoders[ser.region])
            if steps > pcfg.horizon:
                raise CapabilityError(f"model decodes at most {pcfg.horizon} steps, asked for {steps}")
            if model.family == "transformer":
                preds = forecast(model, values, steps, enc, weeks, years)
            else:
                x = enc.encode(values, weeks)[-pcfg.n_in :]
                preds = enc.value_scaler.invert(model.predict_sequence(x[None])[0, :steps])
        y, w = int(years[-1]), int(weeks[-1])
        for k, v in enumerate(preds, start=1):
            y, w = _next_week(y, w)
            rows.append(f"{ser.region},{y},{w},{k},{float(v)!r}")
    _write(out, "forecast.csv", "\n".join(rows) + "\n")
    return f"wrote {len(rows) - 1} forecast rows"


def cmd_tde_sweep(s: dict, explicit: set, out: Path) -> str:
    dims = list(s["dims"])
    if not dims:
        raise ConfigError("dims must not be empty")
    if len(set(dims)) != len(dims):
        raise ConfigError(f"duplicate dimensions in dims: {_fmt(dims)}")
    if min(dims) < 1 or s["tau"] < 1:
        raise ConfigError("TDE dimensions and tau must be positive")
    for d in dims:
        model_config("transformer", s, pipeline_config(s, f"tde:{d},{s['tau']}"))
    train_config("transformer", s)
    series = load_series(s)
    jobs = [
        {"settings": dict(s, seed=derive_seed(s["seed"], 100 + d)), "family": "transformer", "series": series,
         "features": f"tde:{d},{s['tau']}"}
        for d in dims
    ]
    results = _run_jobs(_evaluate_job, jobs)
    lines = ["dimension,pearson,rmse,error"]
    for d, r in zip(dims, results):
        lines.append(f"{d},{_num(r['pearson'])},{_num(r['rmse'])},{_csv_text(r['error'])}")
    _write(out, "tde_sweep.csv", "\n".join(lines) + "\n")
    ok = [(r["rmse"], d, r["pearson"]) for d, r in zip(dims, results) if not r["error"]]
    if ok:
        best_rmse, best_dim, best_p = min(ok)
        summary = f"best_dimension = {best_dim}\nbest_rmse = {best_rmse!r}\nbest_pearson = {best_p!r}\n"
    else:
        summary = "best_dimension = none\n"
    summary += f"dimensions = {len(dims)}\nfailed = {len(dims) - len(ok)}\n"
    _write(out, "tde_sweep.txt", summary)
    return summary.strip().replace("\n", ", ")


def _num(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _csv_text(text: str) -> str:
    text = text.replace("\n", " ")
    return f'"{text.replace(chr(34), chr(39))}"' if ("," in text or '"' in text) else text


def relative_change(value: float, baseline: float) -> float:
    """``100 * (value - baseline) / baseline``."""
    return 100.0 * (value - baseline) / baseline


def compare_table(results: dict[str, dict]) -> tuple[str, str]:
    """CSV and text renderings with percentage change against ARIMA."""
    base = results["arima"]
    csv_lines = ["model,pearson,rmse,pearson_change_pct,rmse_change_pct,error"]
    txt = [f"{'model':<12}{'pearson':>20}{'rmse':>20}"]
    for family in COMPARE_ORDER:
        r = results[family]
        pc = rc = math.nan
        if not r["error"] and not base["error"]:
            pc = relative_change(r["pearson"], base["pearson"])
            # written as the negated decrease so the baseline row reads -0.0
            rc = -(100.0 * (base["rmse"] - r["rmse"]) / base["rmse"])
        csv_lines.append(f"{family},{_num(r['pearson'])},{_num(r['rmse'])},{_num(pc)},{_num(rc)},{_csv_text(r['error'])}")
        if r["error"]:
            txt.append(f"{family:<12}error: {r['error']}")
            continue
        p_cell = f"{r['pearson']:.3f}" + ("" if math.isnan(pc) else f" ({pc:+.1f}%)")
        r_cell = f"{r['rmse']:.3f}" + ("" if math.isnan(rc) else f" ({rc:+.1f}%)")
        txt.append(f"{family:<12}{p_cell:>20}{r_cell:>20}")
    return "\n".join(csv_lines) + "\n", "\n".join(txt) + "\n"


def cmd_compare(s: dict, explicit: set, out: Path) -> str:
    pcfg = pipeline_config(s)
    for family in COMPARE_ORDER:
        model_config(family, s, pcfg)
        if family != "arima":
            train_config(family, s)
    series = load_series(s)
    jobs = [{"settings": s, "family": f, "series": series} for f in COMPARE_ORDER]
    results = dict(zip(COMPARE_ORDER, _run_jobs(_evaluate_job, jobs)))
    csv_text, table = compare_table(results)
    _write(out, "compare.csv", csv_text)
    _write(out, "compare.txt", table)
    for family, r in results.items():
        if not r["error"]:
            _write(out, f"predictions_{family}.csv", r["series"])
            _write(out, f"metrics_{family}.csv", r["metrics"])
    return table.rstrip()


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
    "tde-sweep": cmd_tde_sweep,
    "compare": cmd_compare,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iliformer", description="Weekly ILI forecasting experiments.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--out", required=True, help="output directory")
        for key, spec in KEYS.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=spec.help)
    return parser


def run(argv: list[str] | None = None) -> str:
    args = build_parser().parse_args(argv)
    file_values = read_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k) for k in KEYS}
    settings, explicit = resolve(file_values, flags)
    check_family(settings["model"])
    out = Path(args.out)
    data_path = Path(settings["data"]).resolve() if settings["data"] else None
    if data_path is not None and out.resolve() == data_path:
        raise ConfigError("output directory may not be the data file")
    out.mkdir(parents=True, exist_ok=True)
    _write(out, "config.txt", snapshot(settings))
    return COMMANDS[args.verb](settings, explicit, out)


def exit_code(exc: BaseException) -> int:
    return 2 if isinstance(exc, (ConfigError, CapabilityError)) else 1


def main(argv: list[str] | None = None) -> int:
    try:
        message = run(argv)
    except Exception as exc:  # every failure becomes one parsable line
        code = exit_code(exc)
        text = str(exc) if not isinstance(exc, OSError) else f"{exc.strerror}: {exc.filename}"
        print(json.dumps({"error": type(exc).__name__, "exit_code": code, "message": text}, sort_keys=True),
              file=sys.stderr)
        return code
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
