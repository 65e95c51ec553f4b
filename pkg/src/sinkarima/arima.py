"""ARIMA estimation, AIC order selection and forecasting.

Estimation is two-stage: an AR(p) is fitted by Yule-Walker, then an MA(q)
is fitted to the AR residuals with the innovations algorithm. Orders are
chosen stage by stage by minimum AIC, ``n * ln(sigma2) + 2 * k``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.signal import lfilter

from .errors import (
    AllFitsFailed,
    DegenerateVariance,
    HorizonTooLarge,
    InsufficientHistory,
    NonConvergence,
    NumericalError,
    NumericalSingularity,
    SeriesTooShort,
)
from .series import (
    D_MAX,
    StationarityConfig,
    TimeSeries,
    acf,
    autocovariance,
    levinson_durbin,
    select_d,
)

MAX_HORIZON = 25
MODEL_FORMAT = "sinkarima.arima-model"
MODEL_FORMAT_VERSION = 1


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=float)


def is_stationary_ar(phi, tol: float = 1e-10) -> bool:
    """True when every root of 1 - phi_1 z - ... - phi_p z^p lies outside the unit circle."""
    phi = np.asarray(phi, dtype=float)
    if len(phi) == 0:
        return True
    companion = np.zeros((len(phi), len(phi)))
    companion[0] = phi
    companion[1:, :-1] = np.eye(len(phi) - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(companion))) < 1.0 - tol)


@dataclass(frozen=True)
class WhitenessReport:
    fraction_inside: float
    n_lags: int
    band: float
    passed: bool
    min_fraction: float = 0.9


@dataclass(frozen=True, eq=False)
class ArimaModel:
    phi: np.ndarray
    theta: np.ndarray
    d: int
    mean: float
    sigma2: float
    aic: float
    n_train: int
    diagnostics: Optional[WhitenessReport] = field(default=None, compare=False)

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float).reshape(-1)
        theta = np.array(self.theta, dtype=float).reshape(-1)
        phi.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)
        if self.d < 0:
            raise ValueError("d must be non-negative")
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be non-negative")
        if not self.n_train > self.p + self.q + 1:
            raise ValueError("n_train must exceed p + q + 1")
        if not is_stationary_ar(phi):
            raise ValueError("AR coefficients are outside the stationary region")

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def q(self) -> int:
        return len(self.theta)

    @property
    def order(self) -> tuple:
        return (self.p, self.d, self.q)

    def __repr__(self):
        return f"ArimaModel{self.order}(mean={self.mean:.4g}, sigma2={self.sigma2:.4g}, aic={self.aic:.2f})"

    def same_fit(self, other: "ArimaModel") -> bool:
        return (
            self.order == other.order
            and np.array_equal(self.phi, other.phi)
            and np.array_equal(self.theta, other.theta)
            and self.mean == other.mean
            and self.sigma2 == other.sigma2
        )

    def to_document(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "p": self.p,
            "d": self.d,
            "q": self.q,
            "phi": [float(v) for v in self.phi],
            "theta": [float(v) for v in self.theta],
            "mean": float(self.mean),
            "sigma2": float(self.sigma2),
            "aic": float(self.aic),
            "n_train": int(self.n_train),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ArimaModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a model document (format={doc.get('format')!r})")
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model document version {doc.get('version')!r}")
        model = cls(
            phi=doc["phi"],
            theta=doc["theta"],
            d=int(doc["d"]),
            mean=float(doc["mean"]),
            sigma2=float(doc["sigma2"]),
            aic=float(doc["aic"]),
            n_train=int(doc["n_train"]),
        )
        if (model.p, model.q) != (doc["p"], doc["q"]):
            raise ValueError("order fields disagree with coefficient lengths")
        return model


def save_model(model: ArimaModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_document(), indent=2) + "\n")


def load_model(path) -> ArimaModel:
    return ArimaModel.from_document(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class Residuals:
    values: np.ndarray
    burn_in: int = 0

    @property
    def variance(self) -> float:
        # innovations have zero mean under the model, so use the mean square
        return float(np.mean(self.values ** 2))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class ArFit:
    phi: np.ndarray
    mean: float
    residuals: Residuals
    sigma2: float  # Yule-Walker prediction error variance
    aic: float


@dataclass(frozen=True, eq=False)
class MaFit:
    theta: np.ndarray
    sigma2: float
    innovations: np.ndarray


def aic(sigma2: float, n: int, k_params: int) -> float:
    if not sigma2 > 0:
        raise DegenerateVariance(f"AIC needs a positive variance, got {sigma2}")
    if n <= 0:
        raise ValueError("n must be positive")
    return n * float(np.log(sigma2)) + 2 * k_params


# --- AR stage ---------------------------------------------------------------

def ar_order_scan(series, p_max: int):
    """Yule-Walker innovation variances and AIC for every order 0..p_max."""
    x = _values(series)
    n = len(x)
    gamma = autocovariance(x, p_max)
    _, v, _ = levinson_durbin(gamma, p_max)
    scores = np.array([aic(v[p], n, p + 1) for p in range(p_max + 1)])
    return v, scores


def fit_ar(series, p: int) -> ArFit:
    x = _values(series)
    n = len(x)
    if p < 0:
        raise ValueError("p must be non-negative")
    if n <= p + 2:
        raise SeriesTooShort(f"AR({p}) needs more than {p + 2} samples, got {n}")
    mean = float(x.mean())
    xc = x - mean
    if p == 0:
        phi = np.zeros(0)
        v = np.array([xc @ xc / n])
    else:
        phi, v, _ = levinson_durbin(autocovariance(x, p), p)
    resid = lfilter(np.concatenate(([1.0], -phi)), [1.0], xc)[p:]
    return ArFit(phi, mean, Residuals(resid, burn_in=p), float(v[-1]), aic(v[-1], n, p + 1))


# --- MA stage ---------------------------------------------------------------

def innovations_table(acov, m: int):
    """Innovations algorithm on autocovariances ``acov[0..m]``.

    Returns ``(theta, v)`` where row ``k`` of ``theta`` holds
    theta_{k,1..k} and ``v[k]`` is the one-step error variance at stage k.
    """
    acov = np.asarray(acov, dtype=float)
    theta = np.zeros((m + 1, m + 1))
    v = np.zeros(m + 1)
    v[0] = acov[0]
    if not v[0] > 0:
        raise NonConvergence("innovations recursion needs positive variance")
    for n in range(1, m + 1):
        for k in range(n):
            # theta[n, n-j] * theta[k, k-j] * v[j] for j < k
            j = np.arange(k)
            s = np.sum(theta[k, k - j] * theta[n, n - j] * v[j])
            theta[n, n - k] = (acov[n - k] - s) / v[k]
        j = np.arange(n)
        v[n] = acov[0] - np.sum(theta[n, n - j] ** 2 * v[j])
        if not v[n] > 0 or not np.isfinite(v[n]):
            raise NonConvergence(f"innovations recursion broke down at stage {n}")
    return theta, v


def make_invertible(theta) -> np.ndarray:
    """Reflect MA polynomial roots lying inside the unit circle to their reciprocals."""
    theta = np.asarray(theta, dtype=float)
    if len(theta) == 0:
        return theta.copy()
    coeffs = np.concatenate(([1.0], theta))
    # negligible trailing terms only add spurious roots near infinity
    while len(coeffs) > 1 and abs(coeffs[-1]) <= 1e-12 * np.max(np.abs(coeffs)):
        coeffs = coeffs[:-1]
    if len(coeffs) == 1:
        return theta.copy()
    roots = P.polyroots(coeffs)
    inside = np.abs(roots) < 1.0
    if not inside.any():
        return theta.copy()
    roots = np.where(inside, 1.0 / np.conj(roots), roots)
    poly = P.polyfromroots(roots)
    poly = np.real(poly / poly[0])
    out = np.zeros_like(theta)
    out[: len(poly) - 1] = poly[1:]
    return out


def ma_iterations(q: int, n: int) -> int:
    """Innovations recursion depth used to estimate an MA(q)."""
    return min(n - 1, q + 20)


def _ma_from_table(values, table, q) -> MaFit:
    theta = make_invertible(table[ma_iterations(q, len(values)), 1 : q + 1])
    innov = lfilter([1.0], np.concatenate(([1.0], theta)), values)
    sigma2 = float(np.mean(innov ** 2))
    if not np.isfinite(sigma2):
        raise NonConvergence(f"MA({q}) inverse filter diverged")
    return MaFit(theta, sigma2, innov)


def fit_ma_on_residuals(residuals, q: int) -> MaFit:
    values = residuals.values if isinstance(residuals, Residuals) else np.asarray(residuals, dtype=float)
    if q < 0:
        raise ValueError("q must be non-negative")
    if len(values) <= q + 2:
        raise SeriesTooShort(f"MA({q}) needs more than {q + 2} residuals, got {len(values)}")
    if q == 0:
        return MaFit(np.zeros(0), float(np.mean(values ** 2)), values.copy())
    m = ma_iterations(q, len(values))
    table, _ = innovations_table(autocovariance(values, m), m)
    return _ma_from_table(values, table, q)


# --- full model -------------------------------------------------------------

def in_sample_innovations(model: ArimaModel, series) -> np.ndarray:
    """One-step innovations of ``model`` over ``series`` (original scale), no burn-in dropped."""
    x = _values(series)
    for _ in range(model.d):
        x = np.diff(x)
    return lfilter(
        np.concatenate(([1.0], -model.phi)),
        np.concatenate(([1.0], model.theta)),
        x - model.mean,
    )


def model_residuals(model: ArimaModel, series) -> Residuals:
    burn = max(model.p, model.q)
    return Residuals(in_sample_innovations(model, series)[burn:], burn_in=burn)


def residual_diagnostics(model: ArimaModel, series, lags: int = 20, min_fraction: float = 0.9) -> WhitenessReport:
    """Share of residual autocorrelations at lags 1..``lags`` inside the 2/sqrt(n) band."""
    e = model_residuals(model, series).values
    n = len(e)
    band = float(2.0 / np.sqrt(n))
    lags = min(lags, n - 1)
    if np.ptp(e) == 0:
        # constant residuals carry no autocorrelation at all
        return WhitenessReport(1.0, lags, band, True, min_fraction)
    r = acf(e, lags).coefficients[1:]
    frac = float(np.mean(np.abs(r) <= band))
    return WhitenessReport(frac, lags, band, bool(frac >= min_fraction), min_fraction)


@dataclass(frozen=True)
class SelectionBounds:
    p_max: int = 15
    q_max: int = 35
    d_max: int = D_MAX


def select_model(
    series,
    bounds: SelectionBounds = SelectionBounds(),
    min_train: int = 200,
    stationarity: StationarityConfig = StationarityConfig(),
    refine: bool = False,
) -> ArimaModel:
    """Pick (p, d, q) and fit: d by ACF decay, p by AIC over AR fits, q by AIC over MA fits on the AR residuals.

    Ties go to the smaller order. With ``refine=True`` the two-stage
    estimates seed a joint conditional-sum-of-squares fit, kept only if it
    lowers the innovation variance and stays stationary and invertible.
    """
    y = _values(series)
    n = len(y)
    if n < min_train:
        raise SeriesTooShort(f"need at least {min_train} samples to select a model, got {n}")
    d = select_d(y, bounds.d_max, stationarity)
    x = np.diff(y, d) if d else y
    nx = len(x)

    p_max = max(0, min(bounds.p_max, nx - 3))
    try:
        _, ar_scores = ar_order_scan(x, p_max)
    except NumericalSingularity:
        raise AllFitsFailed("AR order scan failed")
    p = int(np.argmin(ar_scores))  # first minimum = smallest p on ties
    ar = fit_ar(x, p)
    resid = ar.residuals.values
    nr = len(resid)

    q_max = max(0, min(bounds.q_max, nr - 3))
    fits = {}
    table = None
    if q_max > 0:
        m = ma_iterations(q_max, nr)
        try:
            table, _ = innovations_table(autocovariance(resid, m), m)
        except NumericalError:
            table = None
    for q in range(q_max + 1):
        try:
            if q == 0:
                fit = fit_ma_on_residuals(resid, 0)
            elif table is None:
                continue
            else:
                fit = _ma_from_table(resid, table, q)
            fits[q] = (aic(fit.sigma2, nr, p + q + 1), fit)
        except NumericalError:
            continue
    if not fits:
        raise AllFitsFailed("no MA order produced a usable fit")
    best_q = min(fits, key=lambda q: (fits[q][0], q))
    score, ma = fits[best_q]

    model = ArimaModel(ar.phi, ma.theta, d, ar.mean, ma.sigma2, score, n)
    if refine and model.p + model.q > 0:
        model = _refine_css(model, x) or model
    diag = residual_diagnostics(model, y)
    return ArimaModel(model.phi, model.theta, d, model.mean, model.sigma2, model.aic, n, diag)


def _refine_css(model: ArimaModel, x: np.ndarray) -> Optional[ArimaModel]:
    from scipy.optimize import least_squares

    p, q = model.p, model.q
    burn = max(p, q)

    def innov(params):
        mu, phi, theta = params[0], params[1 : 1 + p], params[1 + p :]
        return lfilter(np.concatenate(([1.0], -phi)), np.concatenate(([1.0], theta)), x - mu)[burn:]

    start = np.concatenate(([model.mean], model.phi, model.theta))
    base = innov(start)
    sol = least_squares(innov, start, method="lm")
    phi, theta = sol.x[1 : 1 + p], make_invertible(sol.x[1 + p :])
    if not sol.success or not is_stationary_ar(phi):
        return None
    final = innov(np.concatenate(([sol.x[0]], phi, theta)))
    s2 = float(np.mean(final ** 2))
    if not s2 < float(np.mean(base ** 2)):
        return None
    return ArimaModel(phi, theta, model.d, float(sol.x[0]), s2, aic(s2, len(final), p + q + 1), model.n_train)


# --- forecasting ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Forecast:
    horizon: int
    points: np.ndarray
    std_errors: np.ndarray
    origin_index: int

    def bounds(self, z: float):
        return self.points - z * self.std_errors, self.points + z * self.std_errors


def psi_weights(phi, theta, n: int, d: int = 0) -> np.ndarray:
    """First ``n`` psi-weights of the MA(infinity) form, with (1 - B)^d folded into the AR side."""
    ar = np.concatenate(([1.0], -np.asarray(phi, dtype=float)))
    for _ in range(d):
        ar = P.polymul(ar, [1.0, -1.0])
    phi_full = -ar[1:]
    theta = np.asarray(theta, dtype=float)
    psi = np.zeros(n)
    psi[0] = 1.0
    for j in range(1, n):
        acc = theta[j - 1] if j <= len(theta) else 0.0
        for i in range(1, min(j, len(phi_full)) + 1):
            acc += phi_full[i - 1] * psi[j - i]
        psi[j] = acc
    return psi


def forecast(model: ArimaModel, history, h: int) -> Forecast:
    if h < 1:
        raise ValueError("horizon must be at least 1")
    if h > MAX_HORIZON:
        raise HorizonTooLarge(f"horizon {h} exceeds the maximum of {MAX_HORIZON}")
    y = _values(history)
    need = max(max(model.p, model.q) + model.d, model.d + 1, 1)
    if len(y) < need:
        raise InsufficientHistory(f"need {need} past values, got {len(y)}")

    levels = [y]
    for _ in range(model.d):
        levels.append(np.diff(levels[-1]))
    x = levels[-1] - model.mean
    e = in_sample_innovations(model, y)

    p, q = model.p, model.q
    xs = list(x[-p:]) if p else []
    es = list(e[-q:]) if q else []
    out = np.empty(h)
    for k in range(h):
        val = 0.0
        for i in range(1, p + 1):
            val += model.phi[i - 1] * xs[-i]
        # future innovations are zero; only the known tail of es contributes
        for j in range(1, q + 1):
            val += model.theta[j - 1] * es[-j]
        out[k] = val
        if p:
            xs.append(val)
        if q:
            es.append(0.0)
    points = out + model.mean
    for level in reversed(levels[:-1]):
        points = level[-1] + np.cumsum(points)

    psi = psi_weights(model.phi, model.theta, h, model.d)
    std = np.sqrt(model.sigma2 * np.cumsum(psi ** 2))
    return Forecast(h, points, std, len(y) - 1)
