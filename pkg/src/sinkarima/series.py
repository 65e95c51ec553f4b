"""Series containers, differencing and autocorrelation diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateSeries,
    LagTooLarge,
    NotStationarizable,
    NumericalSingularity,
    OrderTooHigh,
    SeriesTooShort,
)

D_MAX = 2


def _as_array(values) -> np.ndarray:
    if isinstance(values, TimeSeries):
        return values.values
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a one-dimensional sequence")
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Equally spaced samples; sample ``i`` sits at ``origin + i * interval``."""

    values: np.ndarray
    interval: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("values must be finite")
        if not self.interval > 0:
            raise ValueError("interval must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return len(self.values)

    def times(self) -> np.ndarray:
        return self.origin + self.interval * np.arange(len(self.values))

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, self.interval, self.origin)


@dataclass(frozen=True, eq=False)
class DifferencedSeries:
    base: TimeSeries
    d: int
    values: np.ndarray
    # first element of each differencing level 0..d-1, enough to undo the differencing
    initial: np.ndarray = field(default_factory=lambda: np.empty(0))

    def undifference(self) -> np.ndarray:
        return undifference(self.values, self.initial)


def difference(series, d: int, d_max: int = D_MAX) -> DifferencedSeries:
    if d < 0:
        raise ValueError("d must be non-negative")
    if d > d_max:
        raise OrderTooHigh(f"differencing order {d} exceeds d_max={d_max}")
    base = series if isinstance(series, TimeSeries) else TimeSeries(series)
    x = base.values
    if len(x) <= d + 1:
        raise SeriesTooShort(f"need more than {d + 1} samples to difference {d} times, got {len(x)}")
    initial = []
    for _ in range(d):
        initial.append(x[0])
        x = np.diff(x)
    values = np.array(x, dtype=float)
    values.setflags(write=False)
    return DifferencedSeries(base, d, values, np.array(initial, dtype=float))


def undifference(values, initial) -> np.ndarray:
    """Invert ``difference`` given the retained leading value of each level."""
    x = np.asarray(values, dtype=float)
    for x0 in reversed(np.asarray(initial, dtype=float)):
        x = np.concatenate(([x0], x0 + np.cumsum(x)))
    return x


@dataclass(frozen=True, eq=False)
class CorrelogramResult:
    kind: str  # "ACF" or "PACF"
    max_lag: int
    coefficients: np.ndarray  # index = lag, 0..max_lag
    n: int

    @property
    def band(self) -> float:
        return 2.0 / np.sqrt(self.n)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.max_lag + 1)

    def __getitem__(self, lag):
        return self.coefficients[lag]


def _check_correlogram_input(x: np.ndarray, max_lag: int):
    n = len(x)
    if max_lag < 1:
        raise LagTooLarge("max_lag must be at least 1")
    if max_lag >= n:
        raise LagTooLarge(f"max_lag={max_lag} must be smaller than the series length {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    if np.ptp(x) == 0:
        raise DegenerateSeries("series is constant; autocorrelation is undefined")


def autocovariance(x, max_lag: int) -> np.ndarray:
    """Biased sample autocovariances (divisor n) for lags 0..max_lag."""
    x = _as_array(x)
    n = len(x)
    xc = x - x.mean()
    return np.array([xc[: n - k] @ xc[k:] for k in range(max_lag + 1)]) / n


def acf(series, max_lag: int) -> CorrelogramResult:
    x = _as_array(series)
    _check_correlogram_input(x, max_lag)
    gamma = autocovariance(x, max_lag)
    if gamma[0] <= 0:
        raise DegenerateSeries("series has zero sample variance")
    r = gamma / gamma[0]
    r[0] = 1.0
    return CorrelogramResult("ACF", max_lag, r, len(x))


def levinson_durbin(acov, order: int):
    """Solve the Yule-Walker equations of increasing order.

    Returns ``(phi, sigma2, reflection)``: the order-``order`` AR coefficients,
    the prediction error variance at every order 0..order, and the reflection
    (partial autocorrelation) coefficients for lags 1..order.
    """
    acov = np.asarray(acov, dtype=float)
    if len(acov) < order + 1:
        raise ValueError("need autocovariances up to lag `order`")
    sigma2 = np.empty(order + 1)
    sigma2[0] = acov[0]
    if acov[0] <= 0:
        raise NumericalSingularity("zero variance at order 0")
    phi = np.zeros(0)
    reflection = np.empty(order)
    for k in range(1, order + 1):
        kappa = (acov[k] - phi @ acov[k - 1:0:-1]) / sigma2[k - 1]
        phi = np.concatenate((phi - kappa * phi[::-1], [kappa]))
        reflection[k - 1] = kappa
        sigma2[k] = sigma2[k - 1] * (1.0 - kappa * kappa)
        if not sigma2[k] > 0 or not np.isfinite(sigma2[k]):
            raise NumericalSingularity(f"Toeplitz system singular at order {k}")
    return phi, sigma2, reflection


def pacf(series, max_lag: int) -> CorrelogramResult:
    x = _as_array(series)
    _check_correlogram_input(x, max_lag)
    r = acf(x, max_lag).coefficients
    _, _, refl = levinson_durbin(r, max_lag)
    coeffs = np.concatenate(([1.0], refl))
    return CorrelogramResult("PACF", max_lag, coeffs, len(x))


@dataclass(frozen=True)
class StationarityConfig:
    threshold: float = 0.4
    window_start: int = 20  # |ACF| must stay below threshold from here ...
    inspected_lags: int = 40  # ... through here


@dataclass(frozen=True)
class StationarityReport:
    stationary: bool
    decay_lag: Optional[int]
    threshold: float
    inspected_lags: int
    window_start: int


def assess_stationarity(series, config: StationarityConfig = StationarityConfig()) -> StationarityReport:
    """ACF decay rule: stationary when |ACF| is below the threshold across the window.

    For series too short for the configured window, the window is clamped to
    lag ``n - 1``.
    """
    x = _as_array(series)
    if len(x) < 3:
        raise SeriesTooShort("need at least 3 samples to inspect the ACF")
    last = min(config.inspected_lags, len(x) - 1)
    start = min(config.window_start, last)
    r = np.abs(acf(x, last).coefficients)
    below = r < config.threshold
    decay_lag = None
    # smallest lag from which every inspected coefficient stays below threshold
    for k in range(last, 0, -1):
        if not below[k]:
            break
        decay_lag = k
    stationary = decay_lag is not None and decay_lag <= start
    return StationarityReport(stationary, decay_lag, config.threshold, last, start)


def select_d(series, d_max: int = D_MAX, config: StationarityConfig = StationarityConfig()) -> int:
    """Smallest differencing order that makes the series pass ``assess_stationarity``."""
    for d in range(d_max + 1):
        if assess_stationarity(difference(series, d, d_max=max(d_max, D_MAX)).values, config).stationary:
            return d
    raise NotStationarizable(f"series is not stationary after {d_max} differences")


@dataclass(frozen=True, eq=False)
class LagPlot:
    lag: int
    pairs: np.ndarray  # shape (n - lag, 2): columns x_t, x_{t+lag}
    correlation: float


def lag_plot_pairs(series: Sequence[float], lag: int = 1) -> LagPlot:
    x = _as_array(series)
    if lag < 1:
        raise LagTooLarge("lag must be at least 1")
    if len(x) <= lag + 1:
        raise LagTooLarge(f"lag {lag} too large for a series of length {len(x)}")
    a, b = x[:-lag], x[lag:]
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateSeries("lag plot of a constant series has no correlation")
    corr = float(np.clip(np.corrcoef(a, b)[0, 1], -1.0, 1.0))
    return LagPlot(lag, np.column_stack((a, b)), corr)
