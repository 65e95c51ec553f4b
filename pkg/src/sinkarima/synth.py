"""Synthetic ARMA streams with optional injected spikes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .arima import is_stationary_ar
from .errors import InvalidProcessSpec


@dataclass(frozen=True)
class ProcessSpec:
    phi: tuple = ()
    theta: tuple = ()
    mean: float = 0.0
    sigma2: float = 1.0  # innovation variance
    n: int = 1000
    burn_in: int = 500

    def validate(self):
        if self.n < 1:
            raise InvalidProcessSpec("n must be positive")
        if not self.sigma2 >= 0:
            raise InvalidProcessSpec("innovation variance must be non-negative")
        if not is_stationary_ar(self.phi):
            raise InvalidProcessSpec(f"AR coefficients {tuple(self.phi)} are not stationary")
        if not all(np.isfinite(self.theta)) or not np.isfinite(self.mean):
            raise InvalidProcessSpec("non-finite coefficient")


def simulate_arma(spec: ProcessSpec, rng) -> np.ndarray:
    """Draw ``spec.n`` values of a Gaussian ARMA process after a discarded burn-in."""
    spec.validate()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    e = rng.standard_normal(spec.n + spec.burn_in) * np.sqrt(spec.sigma2)
    x = lfilter(np.concatenate(([1.0], spec.theta)), np.concatenate(([1.0], -np.asarray(spec.phi, float))), e)
    return x[spec.burn_in:] + spec.mean


@dataclass(frozen=True)
class Spike:
    index: int
    offset: float


@dataclass
class SpikePlan:
    """Where and how large the injected anomalies are.

    ``magnitude`` is in units of the innovation standard deviation; signs
    alternate unless ``positive_only``.
    """

    indices: list = field(default_factory=list)
    magnitude: float = 6.0
    positive_only: bool = False

    def spikes(self, sigma: float) -> list:
        out = []
        for k, idx in enumerate(sorted(set(int(i) for i in self.indices))):
            sign = 1.0 if (self.positive_only or k % 2 == 0) else -1.0
            out.append(Spike(idx, sign * self.magnitude * sigma))
        return out


def inject(values, plan: SpikePlan, sigma: float):
    """Add spikes to a copy of ``values``; returns ``(values, spikes)``."""
    x = np.array(values, dtype=float)
    spikes = plan.spikes(sigma)
    for s in spikes:
        if not 0 <= s.index < len(x):
            raise InvalidProcessSpec(f"spike index {s.index} outside 0..{len(x) - 1}")
        x[s.index] += s.offset
    return x, spikes


def spread_indices(rng, start: int, stop: int, count: int, min_gap: int = 10) -> list:
    """``count`` sorted indices in [start, stop) at least ``min_gap`` apart."""
    span = stop - start - (count - 1) * (min_gap - 1)
    if count < 0 or span < count:
        raise InvalidProcessSpec(f"cannot place {count} spikes {min_gap} apart in [{start}, {stop})")
    if count == 0:
        return []
    base = np.sort(rng.choice(span, size=count, replace=False))
    return [int(start + b + k * (min_gap - 1)) for k, b in enumerate(base)]


def random_stable_ar(rng, p: int, max_abs_pacf: float = 0.95) -> np.ndarray:
    """Random stationary AR(p) coefficients via the Levinson step-up from partial autocorrelations."""
    phi = np.zeros(0)
    for kappa in rng.uniform(-max_abs_pacf, max_abs_pacf, size=p):
        phi = np.concatenate((phi - kappa * phi[::-1], [kappa]))
    return phi
