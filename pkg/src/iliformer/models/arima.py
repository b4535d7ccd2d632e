"""ARIMA(p, d, q) fitted by conditional sum of squares.

The CSS objective is built from autodiff ops, so its gradient comes from
the same reverse-mode machinery as the neural models.  Fitting runs plain
gradient descent with Barzilai-Borwein steps and an Armijo backtracking
line search, from several seeded starting points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from ..autodiff import Tensor, backward, linear_recurrence
from ..errors import ConfigError, ConvergenceError, LengthError, NonFiniteError
from ..rng import make_rng


@dataclass(frozen=True)
class ArimaDiagnostics:
    css: float
    iterations: int
    converged: bool
    start: int
    stationary: bool
    invertible: bool
    # CSS value after every accepted iteration of the winning start
    trace: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class ArimaSpec:
    p: int = 3
    d: int = 0
    q: int = 3
    constant: bool = True
    phi: tuple[float, ...] = ()
    theta: tuple[float, ...] = ()
    c: float = 0.0
    sigma2: float = math.nan
    diagnostics: ArimaDiagnostics | None = field(default=None, compare=False)

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ConfigError(f"ARIMA orders must be non-negative, got ({self.p},{self.d},{self.q})")
        if self.fitted:
            if len(self.phi) != self.p or len(self.theta) != self.q:
                raise ConfigError("coefficient counts do not match the ARIMA order")
            vals = list(self.phi) + list(self.theta) + [self.c]
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError("fitted ARIMA coefficients must be finite")

    @property
    def fitted(self) -> bool:
        return len(self.phi) + len(self.theta) > 0 or not math.isnan(self.sigma2)

    @property
    def order(self) -> tuple[int, int, int]:
        return self.p, self.d, self.q

    def to_text(self) -> str:
        lines = [
            f"p = {self.p}",
            f"d = {self.d}",
            f"q = {self.q}",
            f"constant = {'on' if self.constant else 'off'}",
            f"phi = {','.join(repr(float(v)) for v in self.phi)}",
            f"theta = {','.join(repr(float(v)) for v in self.theta)}",
            f"c = {float(self.c)!r}",
            f"sigma2 = {float(self.sigma2)!r}",
        ]
        if self.diagnostics is not None:
            dg = self.diagnostics
            lines += [
                f"css = {dg.css!r}",
                f"converged = {'yes' if dg.converged else 'no'}",
                f"stationary = {'yes' if dg.stationary else 'no'}",
                f"invertible = {'yes' if dg.invertible else 'no'}",
            ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ArimaSpec":
        kv = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"bad ARIMA spec line: {line!r}")
            kv[key.strip()] = val.strip()

        def floats(s):
            return tuple(float(v) for v in s.split(",") if v.strip())

        try:
            return cls(
                p=int(kv["p"]),
                d=int(kv["d"]),
                q=int(kv["q"]),
                constant=kv.get("constant", "on") == "on",
                phi=floats(kv.get("phi", "")),
                theta=floats(kv.get("theta", "")),
                c=float(kv.get("c", "0.0")),
                sigma2=float(kv.get("sigma2", "nan")),
            )
        except KeyError as exc:
            raise ConfigError(f"ARIMA spec is missing key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(f"bad ARIMA spec value: {exc}") from None


def difference(x: np.ndarray, d: int) -> np.ndarray:
    for _ in range(d):
        x = np.diff(x)
    return x


def lag_matrix(x: np.ndarray, p: int) -> np.ndarray:
    """Row t holds ``x[t+p-1], ..., x[t]`` for targets ``x[p:]``."""
    n = len(x)
    return np.stack([x[p - i : n - i] for i in range(1, p + 1)], axis=1) if p else np.zeros((n, 0))


def css_objective(w: Tensor, x: np.ndarray, p: int, q: int, constant: bool) -> Tensor:
    """Mean squared CSS residual for parameters ``w = [phi, theta, c]``.

    ``e_t = x_t - c - sum_i phi_i x_{t-i} - sum_j theta_j e_{t-j}`` for
    ``t >= p`` with pre-sample residuals zero.
    """
    u = Tensor(x[p:])
    if p:
        u = u - (Tensor(lag_matrix(x, p)) @ w[:p].reshape(p, 1)).reshape(-1)
    if constant:
        u = u - w[p + q]
    e = linear_recurrence(u, w[p : p + q]) if q else u
    return (e * e).mean()


def _value_and_grad(w: np.ndarray, x, p, q, constant) -> tuple[float, np.ndarray | None]:
    wt = Tensor(w.copy(), requires_grad=True)
    try:
        # trial steps may leave the invertible region and blow up; that is a rejected step
        with np.errstate(over="ignore", invalid="ignore"):
            f = css_objective(wt, x, p, q, constant)
            backward(f)
    except NonFiniteError:
        return math.inf, None
    if not np.all(np.isfinite(wt.grad)):
        return math.inf, None
    return float(f.data), wt.grad.copy()


def _descend(w, x, p, q, constant, max_iter, gtol, ftol):
    """Monotone gradient descent; returns (w, css, iterations, converged, trace)."""
    f, g = _value_and_grad(w, x, p, q, constant)
    if g is None:
        return w, math.inf, 0, False, ()
    trace = [f]
    alpha = 0.1
    for it in range(1, max_iter + 1):
        gnorm2 = float(g @ g)
        if math.sqrt(gnorm2) < gtol:
            return w, f, it - 1, True, tuple(trace)
        step = alpha
        while True:
            w_new = w - step * g
            f_new, g_new = _value_and_grad(w_new, x, p, q, constant)
            if g_new is not None and f_new <= f - 1e-4 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-16:
                # no descent possible at machine precision: a stationary point
                return w, f, it - 1, True, tuple(trace)
        s = w_new - w
        y = g_new - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else 2 * step
        alpha = min(max(alpha, 1e-8), 1e3)
        done = f - f_new <= ftol * (1.0 + abs(f))
        w, f, g = w_new, f_new, g_new
        trace.append(f)
        if done:
            return w, f, it, True, tuple(trace)
    return w, f, max_iter, False, tuple(trace)


def ar_is_stationary(phi) -> bool:
    """All roots of ``1 - phi_1 z - ... - phi_p z^p`` lie outside the unit circle."""
    if len(phi) == 0:
        return True
    poly = np.concatenate((-np.asarray(phi, dtype=np.float64)[::-1], [1.0]))
    return bool(np.all(np.abs(np.roots(poly)) > 1.0))


def ma_is_invertible(theta) -> bool:
    if len(theta) == 0:
        return True
    poly = np.concatenate((np.asarray(theta, dtype=np.float64)[::-1], [1.0]))
    return bool(np.all(np.abs(np.roots(poly)) > 1.0))


def arima_fit(values, spec: ArimaSpec | None = None, starts: int = 8, seed: int = 0,
              max_iter: int = 5000, gtol: float = 1e-7, ftol: float = 1e-13) -> ArimaSpec:
    """CSS estimate of ``spec``'s order on ``values``; returns a fitted copy.

    The series is differenced ``d`` times and standardised before fitting;
    coefficients are mapped back to the original scale afterwards.  Raises
    ``ConvergenceError`` (carrying the best fit found) when no start meets
    the convergence tolerance within ``max_iter`` iterations.
    """
    spec = spec or ArimaSpec()
    p, q = spec.p, spec.q
    x = difference(np.asarray(values, dtype=np.float64), spec.d)
    if len(x) < 2 * (p + q + 1) + 2:
        raise LengthError(f"series of {len(x)} points is too short for ARIMA{spec.order}")
    if starts < 1:
        raise ConfigError("need at least one optimisation start")
    mean, std = float(np.mean(x)), float(np.std(x))
    std = std if std > 0 else 1.0
    z = (x - mean) / std if spec.constant else x / std
    k = p + q + (1 if spec.constant else 0)
    rng = make_rng(seed, 7)
    best = None
    for s in range(starts):
        if s == 0:
            w0 = np.zeros(k)
        else:
            w0 = np.concatenate((
                rng.uniform(-0.5, 0.5, p) / max(p, 1),
                rng.uniform(-0.5, 0.5, q) / max(q, 1),
                rng.normal(0.0, 0.1, k - p - q),
            ))
        w, f, iters, ok, trace = _descend(w0, z, p, q, spec.constant, max_iter, gtol, ftol)
        if best is None or f < best[1]:
            best = (w, f, iters, ok, trace, s)
    w, f, iters, ok, trace, s = best
    if not math.isfinite(f):
        raise ConvergenceError(f"ARIMA{spec.order}: every start diverged", best=None)
    phi = tuple(float(v) for v in w[:p])
    theta = tuple(float(v) for v in w[p : p + q])
    if spec.constant:
        c = std * float(w[p + q]) + mean * (1.0 - sum(phi))
    else:
        c = 0.0
    diag = ArimaDiagnostics(f, iters, ok, s, ar_is_stationary(phi), ma_is_invertible(theta), trace)
    fitted = replace(spec, phi=phi, theta=theta, c=c, sigma2=f * std * std, diagnostics=diag)
    if not ok:
        raise ConvergenceError(
            f"ARIMA{spec.order}: CSS did not converge within {max_iter} iterations (best css {f:.6g})", best=fitted
        )
    return fitted


def arma_residuals(spec: ArimaSpec, x: np.ndarray) -> np.ndarray:
    """CSS residuals for ``t >= p`` of an already-differenced series."""
    p = spec.p
    u = x[p:] - spec.c
    if p:
        u = u - lag_matrix(x, p) @ np.asarray(spec.phi)
    if spec.q:
        u = lfilter([1.0], np.concatenate(([1.0], spec.theta)), u)
    return u


def arima_forecast(fitted: ArimaSpec, history, steps: int = 4) -> np.ndarray:
    """Recursive conditional-expectation forecasts, future shocks set to zero."""
    hist = np.asarray(history, dtype=np.float64).reshape(-1)
    p, q, d = fitted.p, fitted.q, fitted.d
    if len(hist) < p + d:
        raise LengthError(f"forecast needs at least {p + d} history points, got {len(hist)}")
    if steps < 1:
        raise LengthError("steps must be at least 1")
    levels = [hist]
    for _ in range(d):
        levels.append(np.diff(levels[-1]))
    x = levels[-1]
    eps = arma_residuals(fitted, x)
    eps = np.concatenate((np.zeros(p), eps))
    xs = list(x)
    es = list(eps)
    out = []
    for _ in range(steps):
        val = fitted.c
        for i in range(1, p + 1):
            val += fitted.phi[i - 1] * xs[-i]
        for j in range(1, q + 1):
            if len(es) >= j:
                val += fitted.theta[j - 1] * es[-j]
        xs.append(val)
        es.append(0.0)
        out.append(val)
    preds = np.asarray(out)
    for level in reversed(levels[:-1]):
        preds = level[-1] + np.cumsum(preds)
    return preds


@dataclass(frozen=True)
class OrderScore:
    p: int
    q: int
    css: float
    aic: float
    bic: float
    error: str = ""


def arima_order_sweep(values, max_p: int = 5, max_q: int = 5, d: int = 0, constant: bool = True,
                      starts: int = 8, seed: int = 0) -> list[OrderScore]:
    """AIC/BIC from the CSS quasi-likelihood for every (p, q) up to the limits.

    Report only: nothing is selected automatically.
    """
    n_total = len(values) - d
    rows = []
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            try:
                fit = arima_fit(values, ArimaSpec(p, d, q, constant), starts=starts, seed=seed)
            except (ConvergenceError, LengthError) as exc:
                rows.append(OrderScore(p, q, math.nan, math.nan, math.nan, type(exc).__name__))
                continue
            n = n_total - p
            loglik = -0.5 * n * (math.log(2 * math.pi * fit.sigma2) + 1.0)
            k = p + q + int(constant) + 1
            rows.append(OrderScore(p, q, fit.sigma2, -2 * loglik + 2 * k, -2 * loglik + k * math.log(n)))
    return rows


class ArimaForecaster:
    """One ARIMA fit per region on that region's raw training values.

    Predictions are made in original units from the observed history up to
    (but excluding) each target week.
    """

    family = "arima"
    output_units = "original"

    def __init__(self, spec: ArimaSpec | None = None, starts: int = 8, seed: int = 0):
        self.config = spec or ArimaSpec()
        self.starts = starts
        self.seed = seed
        self.fits: dict[str, ArimaSpec] = {}

    def fit(self, regions) -> "ArimaForecaster":
        """``regions``: iterable of (name, training values)."""
        for name, train in regions:
            try:
                self.fits[name] = arima_fit(train, self.config, starts=self.starts, seed=self.seed)
            except ConvergenceError as exc:
                if exc.best is None:
                    raise
                raise ConvergenceError(f"region {name}: {exc}", best=exc.best) from None
        return self

    def predict_dataset(self, dataset, histories) -> np.ndarray:
        """``histories`` maps region -> full raw value array indexed like ``target_index``."""
        out = np.empty(len(dataset))
        for i, (region, t) in enumerate(zip(dataset.regions, dataset.target_index)):
            out[i] = arima_forecast(self.fits[str(region)], histories[str(region)][:t], 1)[0]
        return out

    def to_text(self) -> str:
        parts = []
        for name in sorted(self.fits):
            parts.append(f"[{name}]\n{self.fits[name].to_text()}")
        return "\n".join(parts)
