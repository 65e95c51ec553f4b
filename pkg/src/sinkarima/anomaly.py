"""Confidence-interval anomaly test and forecast substitution for one node's stream."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import List, Optional

import numpy as np

from .arima import ArimaModel, Forecast, SelectionBounds, forecast, select_model
from .errors import InvalidLevel, ModelMissing, RefitFailed, SinkArimaError, ZeroActual

ACCEPTED = "accepted"
REJECTED = "rejected"
SUBSTITUTED_MISSING = "substituted_missing"

MAX_RUN = 5

_STANDARD_NORMAL = NormalDist()


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF (the stdlib's AS241 rational approximation)."""
    if not 0.0 < p < 1.0:
        raise InvalidLevel(f"probability must lie in (0, 1), got {p}")
    return _STANDARD_NORMAL.inv_cdf(p)


def critical_value(level: float) -> float:
    """Two-sided standard normal multiplier, e.g. 1.95996 at 0.95."""
    if not 0.0 < level < 1.0:
        raise InvalidLevel(f"confidence level must lie in (0, 1), got {level}")
    return normal_quantile((1.0 + level) / 2.0)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    z: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, value) -> bool:
        return self.lower <= value <= self.upper


def confidence_interval(mu: float, sigma: float, level: float = 0.95) -> ConfidenceInterval:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    z = critical_value(level)
    return ConfidenceInterval(mu - z * sigma, mu + z * sigma, level, z)


@dataclass(frozen=True)
class Verdict:
    index: int
    observed: Optional[float]
    interval: ConfidenceInterval
    decision: str
    replacement: Optional[float]
    forecast_step: int
    forecast_point: float

    @property
    def output_value(self) -> float:
        return self.observed if self.decision == ACCEPTED else self.replacement


def _is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def test_reading(observed, interval: ConfidenceInterval, forecast_point: float,
                 index: int = 0, forecast_step: int = 1) -> Verdict:
    if _is_missing(observed):
        return Verdict(index, None, interval, SUBSTITUTED_MISSING, forecast_point, forecast_step, forecast_point)
    observed = float(observed)
    if observed in interval:
        return Verdict(index, observed, interval, ACCEPTED, None, forecast_step, forecast_point)
    return Verdict(index, observed, interval, REJECTED, forecast_point, forecast_step, forecast_point)


# keep pytest from collecting the domain function above
test_reading.__test__ = False


def error_percent(actual: float, forecast_value: float) -> float:
    if actual == 0:
        raise ZeroActual("percentage error is undefined for an actual value of 0")
    return 100.0 * abs(actual - forecast_value) / abs(actual)


@dataclass(frozen=True)
class DetectorConfig:
    level: float = 0.95
    max_run: int = MAX_RUN
    bounds: SelectionBounds = SelectionBounds()
    min_train: int = 200
    # "observed": refit on the values as reported, forecasts only filling missing slots;
    # "substitute": refit on the corrected history (replacements included);
    # "drop": corrected history without the trailing anomalous run
    refit_mode: str = "observed"

    def __post_init__(self):
        critical_value(self.level)
        if not 1 <= self.max_run <= MAX_RUN:
            raise ValueError(f"max_run must lie in 1..{MAX_RUN}")
        if self.refit_mode not in ("observed", "substitute", "drop"):
            raise ValueError(f"unknown refit_mode {self.refit_mode!r}")


@dataclass
class NodeStreamState:
    node_id: object
    model: Optional[ArimaModel]
    history: List[float]  # corrected series, forecasts are made from it
    config: DetectorConfig = field(default_factory=DetectorConfig)
    # reported values, forecast-filled only where nothing was reported
    observed: Optional[List[float]] = None
    consecutive_anomalies: int = 0
    fault_flagged: bool = False
    refits: int = 0
    # forecast from the last accepted origin, reused across an anomaly run
    pending: Optional[Forecast] = None

    def __post_init__(self):
        if self.observed is None:
            self.observed = list(self.history)

    @classmethod
    def train(cls, node_id, training, config: DetectorConfig = DetectorConfig()) -> "NodeStreamState":
        values = [float(v) for v in np.asarray(training, dtype=float)]
        model = select_model(values, config.bounds, config.min_train)
        return cls(node_id, model, values, config, list(values))

    @property
    def level(self) -> float:
        return self.config.level

    def clear_fault(self):
        self.fault_flagged = False


def process_reading(state: NodeStreamState, reading, index: Optional[int] = None):
    """Test one reading against the forecast interval and update ``state``.

    ``reading`` is a float, ``None`` for a missing sample, or any object with
    a ``value`` attribute. Returns ``(verdict, state)``; the state is updated
    in place, and left untouched when a triggered refit fails.
    """
    if state.model is None:
        raise ModelMissing(f"node {state.node_id} has no fitted model")
    value = getattr(reading, "value", reading)
    cfg = state.config
    step = state.consecutive_anomalies + 1
    fc = state.pending
    if fc is None:
        fc = forecast(state.model, np.asarray(state.history), cfg.max_run)
    mu = float(fc.points[step - 1])
    ci = confidence_interval(mu, float(fc.std_errors[step - 1]), cfg.level)
    if index is None:
        index = len(state.history)
    verdict = test_reading(value, ci, mu, index, step)

    raw = verdict.replacement if verdict.observed is None else verdict.observed
    if verdict.decision == ACCEPTED:
        state.history.append(verdict.observed)
        state.observed.append(raw)
        state.consecutive_anomalies = 0
        state.pending = None
        return verdict, state

    run = state.consecutive_anomalies + 1
    if run >= cfg.max_run:
        corrected = state.history + [verdict.replacement]
        if cfg.refit_mode == "observed":
            fit_on = state.observed + [raw]
        elif cfg.refit_mode == "substitute":
            fit_on = corrected
        else:
            fit_on = corrected[:-run]
        try:
            model = select_model(fit_on, cfg.bounds, cfg.min_train)
        except SinkArimaError as exc:
            raise RefitFailed(f"node {state.node_id}: refit after {run} anomalies failed: {exc}") from exc
        state.history.append(verdict.replacement)
        state.observed.append(raw)
        state.model = model
        state.refits += 1
        state.fault_flagged = True
        state.consecutive_anomalies = 0
        state.pending = None
        return verdict, state

    state.history.append(verdict.replacement)
    state.observed.append(raw)
    state.consecutive_anomalies = run
    state.pending = fc
    return verdict, state
