"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL/SKIP line that is printed in the pytest
terminal summary.  Running this file directly prints the same lines.

The soft real-data check runs only when ``ILIFORMER_ILINET_CSV`` points
to a weekly ILI CSV.
"""

import csv
import itertools
import math
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.signal import lfilter

from iliformer import cli
from iliformer.autodiff import (
    Tensor,
    concat,
    dropout,
    finite_difference_check,
    layer_norm,
    linear_recurrence,
    matmul,
    minimum,
    softmax,
    stack,
)
from iliformer.data import FeatureSpec, PipelineConfig, RawSeries, TdeConfig, fit_scaler, make_tde, prepare, write_csv
from iliformer.models import (
    ArimaSpec,
    LstmConfig,
    LstmForecaster,
    Seq2SeqConfig,
    Seq2SeqForecaster,
    TransformerConfig,
    TransformerModel,
)
from iliformer.models.arima import arima_fit, arima_forecast, css_objective
from iliformer.rng import make_rng
from iliformer.training import (
    AdamState,
    TrainConfig,
    WarmupSchedule,
    adam_step,
    evaluate_prepared,
    huber_loss,
    lr_at_step,
    mse_loss,
    pearson,
    rmse,
    train,
)

REAL_DATA_ENV = "ILIFORMER_ILINET_CSV"


def _record(config, line):
    print(line)
    if config is not None:
        config.acceptance_lines.append(line)


def _verdict(request, number, title, check):
    config = request.config if request is not None else None
    try:
        detail = check()
    except AssertionError as exc:
        _record(config, f"criterion {number} ({title}): FAIL {exc}")
        raise
    _record(config, f"criterion {number} ({title}): PASS {detail}")


# --- 1: gradients --------------------------------------------------------------
OPS = {
    "add": lambda a, b: (a + b).tanh(),
    "broadcast_add": lambda a, b: (a + b[0]).sigmoid(),
    "sub": lambda a, b: (a - b) * b,
    "neg": lambda a, b: (-a) * b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / (b * b + 1.0),
    "pow": lambda a, b: (a * a + 1.0) ** 1.5,
    "exp": lambda a, b: (a * 0.3).exp(),
    "log": lambda a, b: (a * a + 0.5).log(),
    "sqrt": lambda a, b: (a * a + 0.5).sqrt(),
    "tanh": lambda a, b: a.tanh() * b,
    "sigmoid": lambda a, b: a.sigmoid() * b,
    "relu": lambda a, b: (a + 0.05).relu() * b,
    "abs": lambda a, b: (a + 0.05).abs() * b,
    "minimum": lambda a, b: minimum(a, 0.3) * b,
    "matmul": lambda a, b: matmul(a, b.transpose()),
    "batched_matmul": lambda a, b: matmul(a.reshape(2, 2, 3), b.reshape(2, 3, 2)),
    "transpose": lambda a, b: a.transpose() * b.transpose(),
    "swapaxes": lambda a, b: a.reshape(2, 2, 3).swapaxes(1, 2) * b.reshape(2, 3, 2),
    "reshape": lambda a, b: a.reshape(3, 4) * b.reshape(3, 4),
    "getitem": lambda a, b: a[1:, ::2] * b[:-1, 1::2],
    "fancy_getitem": lambda a, b: a[[0, 0, 2]] * b[[1, 1, 1]],
    "sum_axis": lambda a, b: a.sum(axis=0) * b.mean(axis=0),
    "mean": lambda a, b: a.mean(axis=1, keepdims=True) * b,
    "concat": lambda a, b: concat([a, b * 2.0], axis=1).tanh(),
    "stack": lambda a, b: stack([a, b], axis=1).sigmoid(),
    "softmax": lambda a, b: softmax(a) * b,
    "masked_softmax": lambda a, b: softmax(a[:, :3], mask=np.tril(np.ones((4, 3), dtype=bool))) * b[:, :3],
    "layer_norm": lambda a, b: layer_norm(a, b[0], b[1]) * b,
    "dropout": lambda a, b: dropout(a, 0.3, True, make_rng(5)) * b,
    "linear_recurrence": lambda a, b: linear_recurrence(a.reshape(-1), b[0, :2] * 0.3) ** 2,
}
SEEDS = range(20)


def _op_errors():
    worst = {}
    for name, op in OPS.items():
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            a = Tensor(rng.normal(size=(4, 3)))
            b = Tensor(rng.normal(size=(4, 3)))
            err = finite_difference_check(lambda ts: (op(*ts) * 1.0).sum(), [a, b])
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def _transformer_error(seed):
    cfg = TransformerConfig(d_model=8, n_heads=2, n_layers=1, d_ff=8, dropout=0.0, n_in=4, horizon=3)
    model = TransformerModel(cfg, seed)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 4, 1)))
    dec = Tensor(rng.normal(size=(2, 3, 1)))
    y = Tensor(rng.normal(size=(2, 3)))
    return finite_difference_check(lambda ps: mse_loss(model(x, dec), y), model.parameters(), max_coords=3, rng=rng)


def _lstm_error(seed):
    rng = np.random.default_rng(seed)
    model = LstmForecaster(LstmConfig(units=(3, 2), horizon=2, dropout=0.0, n_in=3, feature_arity=2), seed)
    x = Tensor(rng.normal(size=(2, 3, 2)))
    y = Tensor(rng.normal(size=(2, 2)))
    return finite_difference_check(lambda ps: huber_loss(model(x), y), model.parameters(), max_coords=6, rng=rng)


def _seq2seq_error(seed):
    rng = np.random.default_rng(seed)
    cfg = Seq2SeqConfig(dense_units=3, gru_units=4, horizon=3, dropout=0.0, n_in=4, feature_arity=2)
    model = Seq2SeqForecaster(cfg, seed)
    x = Tensor(rng.normal(size=(2, 4, 2)))
    y = Tensor(rng.normal(size=(2, 3)))
    return finite_difference_check(
        lambda ps: mse_loss(model(x, y, training=True, rng=make_rng(0)), y), model.parameters(), max_coords=5, rng=rng
    )


def _css_error(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=60)
    w = Tensor(np.concatenate([rng.uniform(-0.3, 0.3, 6), [rng.normal()]]))
    return finite_difference_check(lambda t: css_objective(t, x, 3, 3, True), w)


def criterion_1():
    start = time.process_time()
    worst = _op_errors()
    for name, fn in [("transformer", _transformer_error), ("lstm", _lstm_error),
                     ("seq2seq", _seq2seq_error), ("arima_css", _css_error)]:
        worst[name] = max(fn(seed) for seed in SEEDS)
    elapsed = time.process_time() - start
    bad = {k: v for k, v in worst.items() if not v < 1e-4}
    assert not bad, f"relative error >= 1e-4 for {bad}"
    assert elapsed < 300, f"suite took {elapsed:.0f}s of CPU"
    return f"{len(worst)} checks x {len(SEEDS)} seeds, worst {max(worst.values()):.2e}, {elapsed:.0f}s CPU"


# --- 2: causality ---------------------------------------------------------------
def _causality_violations(model, rng, trials=3):
    m = model.config.horizon
    x = rng.normal(size=(1, model.config.n_in, 1))
    base = rng.normal(size=(1, m, 1))
    ref = model(x, base).data[0]
    violations, inert = 0, 0
    for r in range(1, m + 1):
        for subset in itertools.combinations(range(m), r):
            for _ in range(trials):
                dec = base.copy()
                dec[0, list(subset), 0] += rng.normal(size=len(subset)) * 5.0
                out = model(x, dec).data[0]
                first = min(subset)
                if not np.array_equal(out[:first], ref[:first]):
                    violations += 1
                if np.array_equal(out[first], ref[first]):
                    inert += 1
    return violations, inert


def criterion_2():
    cases = 0
    models = [TransformerModel(TransformerConfig(dropout=0.2), 0)]
    models += [TransformerModel(TransformerConfig(d_model=8, n_heads=2, n_layers=2, d_ff=16), s) for s in range(10)]
    for i, model in enumerate(models):
        assert model.config.horizon == 4
        violations, inert = _causality_violations(model, np.random.default_rng(i))
        assert violations == 0, f"model {i}: {violations} perturbations leaked into earlier positions"
        assert inert == 0, f"model {i}: perturbing a position left its own output unchanged"
        cases += 15 * 3
    return f"{cases} subset perturbations over {len(models)} models, earlier positions bit-identical"


# --- 3: pipeline oracles --------------------------------------------------------
def _brute_windows(scaled, lo_start, n, n_in, m):
    starts = [s for s in range(lo_start, n) if s + n_in + m <= n]
    inputs = np.array([scaled[s : s + n_in] for s in starts]).reshape(len(starts), n_in)
    targets = np.array([scaled[s + n_in : s + n_in + m] for s in starts]).reshape(len(starts), m)
    return inputs, targets, np.array([s + n_in for s in starts], dtype=np.int64)


def _check_windows(x, context):
    n = len(x)
    n_train = 2 * n // 3
    lo, hi = x[:n_train].min(), x[:n_train].max()
    scaled = (x - lo) / (hi - lo)
    prep = prepare([RawSeries.from_values("r", x)], PipelineConfig(test_context=context))
    first = max(0, n_train - 10) if context == "train_tail" else n_train
    ti, tt, tidx = _brute_windows(scaled, first, n, 10, 4)
    keep = tidx >= n_train
    if not keep.any():
        assert prep.regions == [] and prep.dropped[0][0] == "r"
        return
    rd = prep.regions[0]
    bi, bt, bidx = _brute_windows(scaled, 0, n_train, 10, 4)
    assert np.array_equal(rd.train.inputs[:, :, 0], bi) and np.array_equal(rd.train.targets, bt)
    assert np.array_equal(rd.train.target_index, bidx)
    assert np.array_equal(rd.train.future[:, :, 0], bt)
    assert np.array_equal(rd.test.inputs[:, :, 0], ti[keep]) and np.array_equal(rd.test.targets, tt[keep])
    assert np.array_equal(rd.test.target_index, tidx[keep])


def _check_round_trip(rng):
    lo = float(rng.integers(-50, 50))
    span = float(2 ** rng.integers(0, 7))
    j = np.concatenate([[0, 1024], rng.integers(0, 1025, size=60)])
    v = lo + span * j / 1024.0
    sc = fit_scaler(v)
    assert np.array_equal(sc.apply(v), j / 1024.0)
    assert np.array_equal(sc.invert(sc.apply(v)), v)
    # off the dyadic lattice, the round trip is exact up to rounding of the affine map
    w = rng.normal(size=200) * rng.uniform(0.1, 100) + rng.uniform(-100, 100)
    sc = fit_scaler(w[:100])
    back = sc.invert(sc.apply(w))
    bound = 4 * np.spacing(max(abs(sc.min), abs(sc.max), np.abs(w).max()))
    assert np.abs(back - w).max() <= bound


def _check_tde(x, rng):
    d, tau = int(rng.integers(1, 9)), int(rng.integers(1, 4))
    emb = make_tde(x, TdeConfig(d, tau))
    start = (d - 1) * tau
    brute = np.array([[x[t - j * tau] for j in range(d)] for t in range(start, len(x))])
    assert np.array_equal(emb, brute)


def _check_isolation(x, rng):
    n_train = 2 * len(x) // 3
    for features in ("none", "week+diffs", "tde:4,2"):
        for context in ("train_tail", "test_only"):
            cfg = PipelineConfig(features=FeatureSpec.parse(features), test_context=context)
            a = prepare([RawSeries.from_values("r", x)], cfg).regions[0]
            y = x.copy()
            y[n_train:] = rng.uniform(0, 1e3, size=len(x) - n_train)
            b = prepare([RawSeries.from_values("r", y)], cfg).regions[0]
            assert a.encoder.to_dict() == b.encoder.to_dict()
            for field in ("inputs", "targets", "future", "target_index"):
                assert getattr(a.train, field).tobytes() == getattr(b.train, field).tobytes()
            assert (a.train.target_index + 3).max() < n_train <= a.test.target_index.min()
            if context == "test_only":
                lookback = cfg.features.lookback
                assert (a.test.target_index - 10 - lookback).min() >= n_train - lookback


def criterion_3():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(60, 260))
        x = np.abs(rng.normal(size=n)) * rng.uniform(0.5, 20) + 0.1
        for context in ("train_tail", "test_only"):
            _check_windows(x, context)
        _check_round_trip(rng)
        _check_tde(x, rng)
        _check_isolation(x, rng)
    return "100 randomized series: windows, scaler round trip, TDE identity, boundary isolation"


# --- 4: synthetic sinusoid --------------------------------------------------------
def criterion_4():
    amplitude = 1.0
    t = np.arange(416)
    series = RawSeries.from_values("synthetic", 2.0 + amplitude * np.sin(2 * np.pi * t / 52))
    prep = prepare([series], PipelineConfig())
    model = TransformerModel(TransformerConfig(d_model=32, n_heads=4, n_layers=2, d_ff=64, dropout=0.0), 0)
    start = time.process_time()
    train(model, prep.train, TrainConfig(epochs=300, warmup_steps=400, patience=300, seed=0))
    report = evaluate_prepared(model, prep)
    elapsed = time.process_time() - start
    r, err = report.mean_pearson, report.mean_rmse / amplitude
    assert r >= 0.99, f"pearson {r:.5f} < 0.99"
    assert err <= 0.02, f"rmse {100 * err:.2f}% of amplitude > 2%"
    assert elapsed < 1800, f"{elapsed:.0f}s of CPU"
    return f"pearson {r:.5f}, rmse {100 * err:.2f}% of amplitude, {elapsed:.0f}s CPU"


# --- 5: ARIMA recovery ------------------------------------------------------------
def _simulate(ar, ma, n, seed, burn=200):
    e = np.random.default_rng(seed).normal(size=n + burn)
    return lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar)], e)[burn:]


def criterion_5():
    phis, arma = [], []
    for seed in range(3):
        fit = arima_fit(_simulate([0.8], [], 2000, seed), ArimaSpec(1, 0, 0))
        assert abs(fit.phi[0] - 0.8) <= 0.05, f"AR(1) seed {seed}: phi {fit.phi[0]:.4f}"
        phis.append(fit.phi[0])
        fit = arima_fit(_simulate([0.5], [0.3], 5000, 100 + seed), ArimaSpec(1, 0, 1))
        assert abs(fit.phi[0] - 0.5) <= 0.1 and abs(fit.theta[0] - 0.3) <= 0.1, (
            f"ARMA(1,1) seed {seed}: phi {fit.phi[0]:.4f} theta {fit.theta[0]:.4f}"
        )
        arma.append((fit.phi[0], fit.theta[0]))
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        phi, c, last = rng.uniform(-0.99, 0.99), rng.uniform(-5, 5), rng.uniform(-10, 10)
        out = arima_forecast(ArimaSpec(1, 0, 0, phi=(phi,), c=c, sigma2=1.0), [0.0, last], 6)
        for k in range(1, 7):
            closed = c * (1 - phi**k) / (1 - phi) + phi**k * last
            worst = max(worst, abs(out[k - 1] - closed) / max(1.0, abs(closed)))
    assert worst <= 1e-12, f"closed form mismatch {worst:.2e}"
    return (f"AR(1) phi {', '.join(f'{p:.3f}' for p in phis)}; "
            f"ARMA(1,1) {', '.join(f'{p:.3f}/{q:.3f}' for p, q in arma)}; closed form worst {worst:.1e}")


# --- 6: schedule and Adam ------------------------------------------------------------
def criterion_6():
    sched = WarmupSchedule(64, 5000)
    lr = lr_at_step(5000, sched)
    assert abs(lr - 1.7678e-3) <= 1e-7, f"lr_at_step(5000) = {lr}"
    lrs = np.array([lr_at_step(k, sched) for k in range(1, 15001)])
    assert int(np.argmax(lrs)) + 1 == 5000, f"peak at step {int(np.argmax(lrs)) + 1}"
    rng = np.random.default_rng(0)
    ps = [Tensor(rng.normal(size=(3, 2)), requires_grad=True), Tensor(rng.normal(size=4), requires_grad=True)]
    before = [p.data.copy() for p in ps]
    adam_step(ps, [np.zeros((3, 2)), np.zeros(4)], AdamState.for_params(ps), 0.1)
    assert all(np.array_equal(p.data, b) for p, b in zip(ps, before)), "zero gradient moved parameters"
    for kw in ({"beta1": 0.9, "beta2": 0.98, "eps": 1e-9}, {}):
        g = rng.normal(size=50)
        p = Tensor(np.zeros(50), requires_grad=True)
        adam_step([p], [g], AdamState.for_params([p], **kw), 0.01)
        assert np.allclose(np.abs(p.data), 0.01, rtol=1e-5), "first step magnitude differs from lr"
    return f"lr(5000) = {lr:.7e}, peak at 5000, zero-gradient no-op, first step = lr"


# --- 7: metrics ---------------------------------------------------------------------
def _pearson_loop(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def _rmse_loop(x, y):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)) / len(x))


def criterion_7():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 200))
        x = rng.normal(size=n)
        y = rng.normal(size=n) + rng.uniform(-1, 1) * x
        worst = max(worst, abs(pearson(x, y) - _pearson_loop(x, y)), abs(rmse(x, y) - _rmse_loop(x, y)))
    assert worst <= 1e-10, f"reference mismatch {worst:.2e}"
    exact = 0
    for _ in range(200):
        x = rng.integers(-1000, 1000, size=64).astype(float)
        y = rng.integers(-1000, 1000, size=64).astype(float)
        a, b = 2.0 ** int(rng.integers(-8, 9)), float(rng.integers(-10**6, 10**6))
        assert pearson(a * x + b, y) == pearson(x, y), f"affine map a={a} b={b} changed pearson"
        exact += 1
    drift = 0.0
    for _ in range(200):
        x, y = rng.normal(size=100), rng.normal(size=100)
        a, b = rng.uniform(0.01, 100), rng.uniform(-100, 100)
        drift = max(drift, abs(pearson(a * x + b, y) - pearson(x, y)))
    assert drift <= 1e-12, f"affine drift {drift:.2e} on general floats"
    return f"reference worst {worst:.1e}; {exact} exact affine cases; general-float drift {drift:.1e}"


# --- 8: real data (soft) ----------------------------------------------------------
def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def criterion_8():
    data = os.environ.get(REAL_DATA_ENV)
    if not data:
        pytest.skip(f"set {REAL_DATA_ENV} to a weekly ILI CSV to run the real-data comparison")
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp)
        assert cli.main(["compare", "--data", data, "--out", str(out / "compare")]) == 0, "compare failed"
        rows = {r["model"]: r for r in _read_csv(out / "compare" / "compare.csv")}
        p = {k: float(r["pearson"]) for k, r in rows.items()}
        e = {k: float(r["rmse"]) for k, r in rows.items()}
        assert cli.main(["tde-sweep", "--data", data, "--dims", "2,4,6,8,16,32", "--out", str(out / "tde")]) == 0
        sweep = _read_csv(out / "tde" / "tde_sweep.csv")
    assert all(p[m] > p["arima"] for m in ("lstm", "seq2seq", "transformer")), f"pearson {p}"
    assert e["transformer"] == min(e.values()), f"rmse {e}"
    rmses = {int(r["dimension"]): float(r["rmse"]) for r in sweep if r["rmse"]}
    assert len(rmses) == 6 and all(math.isfinite(v) for v in rmses.values()), f"tde table {sweep}"
    best = min(rmses, key=rmses.get)
    return f"(soft) ordering holds; tde best dimension {best} rmse {rmses[best]:.3f} (reference: 8, 0.605)"


# --- 9: determinism -------------------------------------------------------------------
FAST = ["--epochs", "2", "--d-model", "8", "--n-heads", "2", "--n-layers", "1", "--d-ff", "8",
        "--lstm-units", "4", "--dense-units", "4", "--gru-units", "4",
        "--arima-p", "1", "--arima-q", "1", "--arima-starts", "2"]


def _snapshot(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _all_commands(data, out):
    ckpt = out / "train" / "checkpoint.ckpt"
    runs = [
        ["train", "--data", data, "--out", out / "train", *FAST],
        ["evaluate", "--data", data, "--checkpoint", ckpt, "--out", out / "evaluate"],
        ["forecast", "--data", data, "--checkpoint", ckpt, "--steps", "4", "--out", out / "forecast"],
        ["tde-sweep", "--data", data, "--dims", "1,2,4", "--out", out / "tde", *FAST],
        ["compare", "--data", data, "--out", out / "compare", *FAST],
    ]
    for argv in runs:
        code = cli.main([str(a) for a in argv])
        assert code == 0, f"{argv[0]} exited {code}"
    return _snapshot(out)


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        rng = np.random.default_rng(9)
        t = np.arange(150)
        write_csv(root / "ili.csv", [
            RawSeries.from_values(f"Region {k}", 2 + np.sin(2 * np.pi * t / 52 + k) + 0.1 * rng.normal(size=150))
            for k in range(3)
        ])
        first = _all_commands(root / "ili.csv", root / "out")
        shutil.rmtree(root / "out")
        previous = os.environ.get("ILIFORMER_WORKERS")
        os.environ["ILIFORMER_WORKERS"] = "2"
        try:
            second = _all_commands(root / "ili.csv", root / "out")
        finally:
            if previous is None:
                del os.environ["ILIFORMER_WORKERS"]
            else:
                os.environ["ILIFORMER_WORKERS"] = previous
    assert first.keys() == second.keys(), "artifact sets differ"
    differing = sorted(k for k in first if first[k] != second[k])
    assert not differing, f"artifacts differ: {differing}"
    return f"{len(first)} artifacts from 5 commands byte-identical (serial vs 2 workers)"


CRITERIA = [
    (1, "gradient suite", criterion_1),
    (2, "causality", criterion_2),
    (3, "pipeline oracles", criterion_3),
    (4, "synthetic sinusoid", criterion_4),
    (5, "ARIMA recovery", criterion_5),
    (6, "schedule and optimizer", criterion_6),
    (7, "metrics", criterion_7),
    (8, "real-data ordering", criterion_8),
    (9, "determinism", criterion_9),
]


@pytest.mark.slow
@pytest.mark.parametrize("number, title, check", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_acceptance(request, number, title, check):
    try:
        _verdict(request, number, title, check)
    except pytest.skip.Exception as exc:
        _record(request.config, f"criterion {number} ({title}): SKIP {exc.msg}")
        raise


if __name__ == "__main__":
    failed = 0
    for number, title, check in CRITERIA:
        try:
            _verdict(None, number, title, check)
        except AssertionError:
            failed += 1
        except pytest.skip.Exception as exc:
            print(f"criterion {number} ({title}): SKIP {exc.msg}")
    sys.exit(1 if failed else 0)
