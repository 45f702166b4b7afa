"""
dfmrisk.risk
~~~~~~~~~~~~

This module provides the three risk measures read off a latent factor path:

- latent trend: least-squares slope over a trailing window, classified as
  rising, falling or flat against a threshold in factor standard deviations;
- volatility: population standard deviation (divisor N);
- percentile: the order statistic at 1-based index ceil(p·(N+1)), clamped into
  [1, N], and its inverse, the fraction of values strictly below x.

A rising factor means rising risk; ``RiskOptions.orientation`` (+1/-1) aligns the
factor with that reading before the measures are taken.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import EmptySeries, InvalidOption, InvalidP, InvalidWindow, WindowTooLong

logger = logging.getLogger(__name__)


class TrendDirection(Enum):
    RISING = "Rising"
    FALLING = "Falling"
    FLAT = "Flat"


@dataclass(frozen=True)
class RiskOptions:
    window: int = 8
    threshold: float = 0.01
    orientation: int = 1

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise InvalidOption("risk orientation must be +1 or -1, got {!r}".format(
                self.orientation))
        if int(self.window) < 2:
            raise InvalidOption("risk window must be >= 2, got {!r}".format(self.window))
        if not self.threshold >= 0:
            raise InvalidOption("trend threshold must be >= 0, got {!r}".format(self.threshold))


@dataclass(frozen=True)
class Trend:
    direction: TrendDirection
    slope: float


@dataclass(frozen=True, eq=False)
class RiskSeries:
    factor: np.ndarray
    index: object
    trend_direction: TrendDirection
    slope: float
    volatility: float
    percentile_of_latest: float
    orientation: int = 1

    def as_dict(self):
        return {
            "periods": [self.index.start, self.index.end] if self.index is not None else None,
            "orientation": self.orientation,
            "trend_direction": self.trend_direction.value,
            "slope": float(self.slope),
            "volatility": float(self.volatility),
            "latest": float(self.factor[-1]),
            "percentile_of_latest": float(self.percentile_of_latest),
        }


def _series(values):
    x = np.asarray(values, dtype=float).ravel()
    x = x[~np.isnan(x)]
    if x.size == 0:
        raise EmptySeries("series has no values")
    return x


def volatility(series):
    """sqrt((1/N)·Σ (x_t − μ)²)."""
    x = _series(series)
    mu = np.mean(x)
    return float(np.sqrt(np.mean((x - mu) ** 2)))


def percentile_value(series, p):
    """
    Element at 1-based rank ceil(p·(N+1)) of the ascending sort, clamped into [1, N].

    :raises InvalidP: p outside (0, 1).
    :raises EmptySeries: the series is empty.
    """
    if not 0.0 < p < 1.0:
        raise InvalidP("percentile must lie in (0, 1), got {!r}".format(p))
    x = np.sort(_series(series))
    n = x.size
    rank = min(max(math.ceil(p * (n + 1)), 1), n)
    return float(x[rank - 1])


def percentile_rank(series, x):
    """Fraction of observations strictly below ``x``."""
    values = _series(series)
    return float(np.count_nonzero(values < x)) / values.size


def latent_trend(path, window=8, threshold=0.01):
    """
    Slope of the trailing ``window`` values on the ramp 0..window-1.

    Rising when slope > threshold·σ(path), falling when slope < −threshold·σ(path),
    flat otherwise; σ is the population std of the whole path.

    :rtype Trend:
    :raises InvalidWindow: window < 2.
    :raises WindowTooLong: window exceeds the path length.
    """
    x = _series(path)
    window = int(window)
    if window < 2:
        raise InvalidWindow("trend window must be >= 2, got {}".format(window))
    if window > x.size:
        raise WindowTooLong("trend window {} exceeds path length {}".format(window, x.size))
    tail = x[-window:]
    ramp = np.arange(window, dtype=float)
    centred = ramp - ramp.mean()
    slope = float(centred @ (tail - tail.mean()) / (centred @ centred))
    cutoff = threshold * volatility(x)
    if slope > cutoff:
        direction = TrendDirection.RISING
    elif slope < -cutoff:
        direction = TrendDirection.FALLING
    else:
        direction = TrendDirection.FLAT
    return Trend(direction=direction, slope=slope)


def risk_summary(path, index=None, options=None):
    """
    All three measures for a (possibly multi-factor) path; the first factor is used.

    :rtype RiskSeries:
    """
    options = options or RiskOptions()
    path = np.asarray(path, dtype=float)
    if path.ndim == 2:
        path = path[:, 0]
    oriented = options.orientation * path
    window = min(int(options.window), oriented.size)
    if window < int(options.window):
        logger.warning("[Risk] window %d longer than path, using %d", options.window, window)
    trend = latent_trend(oriented, window, options.threshold)
    return RiskSeries(
        factor=oriented, index=index, trend_direction=trend.direction, slope=trend.slope,
        volatility=volatility(oriented),
        percentile_of_latest=percentile_rank(oriented, oriented[-1]),
        orientation=options.orientation,
    )
