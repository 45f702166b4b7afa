"""
dfmrisk.forecast
~~~~~~~~~~~~~~~~

This module provides h-step forecasts of the latent factor and the observed
series, scenario conditioning and the early-warning alert rule.

Forecasts start from the filtered terminal state and iterate the transition
equation. Scenarios treat hypothesised future values of selected series as data:
the filter runs over the sample followed by h future periods in which only the
overridden cells are observed.

Scenario kinds:
---------------
- ``PathOverride``: the override value is the future value of the series
  (standardized units).
- ``ShockOnce``: the override value is added to the baseline forecast mean of the
  series at that period.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .exceptions import (
    InvalidHorizon,
    InvalidOption,
    NotConverged,
    OverrideBeyondHorizon,
    OverrideInSample,
    UnknownSeries,
)
from .kalman import kalman_filter, predict
from .risk import percentile_value
from .state_space import build

logger = logging.getLogger(__name__)


class ScenarioKind(Enum):
    PATH_OVERRIDE = "PathOverride"
    SHOCK_ONCE = "ShockOnce"

    @classmethod
    def parse(cls, text):
        if isinstance(text, ScenarioKind):
            return text
        key = str(text).replace("_", "").replace("-", "").lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise InvalidOption("unknown scenario kind {!r}".format(text))


@dataclass(frozen=True)
class Override:
    series: str
    period: str
    value: float


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: ScenarioKind = ScenarioKind.PATH_OVERRIDE
    overrides: tuple = ()


@dataclass(frozen=True)
class AlertRule:
    percentile: float = 0.9
    consecutive: int = 2

    def __post_init__(self):
        if not 0.0 < self.percentile < 1.0:
            raise InvalidOption("alert percentile must lie in (0, 1), got {!r}".format(
                self.percentile))
        if int(self.consecutive) < 1:
            raise InvalidOption("alert needs consecutive >= 1, got {!r}".format(self.consecutive))


@dataclass(frozen=True)
class AlertReport:
    fired: bool
    threshold: float
    first_breach: str = None
    first_breach_step: int = None
    run_length: int = 0

    def as_dict(self):
        return {"fired": self.fired, "threshold": self.threshold,
                "first_breach": self.first_breach, "first_breach_step": self.first_breach_step,
                "run_length": self.run_length}


@dataclass(frozen=True, eq=False)
class Forecast:
    """Forecast paths over ``index``; observables are in standardized units."""

    index: object
    level: float
    names: tuple
    factor_mean: np.ndarray
    factor_variance: np.ndarray
    observable_mean: np.ndarray
    observable_variance: np.ndarray
    state_means: np.ndarray = field(repr=False, default=None)
    state_covs: np.ndarray = field(repr=False, default=None)

    @property
    def horizon(self):
        return self.factor_mean.shape[0]

    @property
    def z(self):
        return float(stats.norm.ppf(0.5 * (1.0 + self.level)))

    def factor_bands(self):
        half = self.z * np.sqrt(self.factor_variance)
        return self.factor_mean - half, self.factor_mean + half

    def observable_bands(self):
        half = self.z * np.sqrt(self.observable_variance)
        return self.observable_mean - half, self.observable_mean + half

    def destandardized(self, series_stats):
        """(mean, lower, upper) of the observables in original units."""
        mu = np.array([s.mean for s in series_stats])
        sd = np.array([s.std for s in series_stats])
        lower, upper = self.observable_bands()
        return self.observable_mean * sd + mu, lower * sd + mu, upper * sd + mu


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    scenario: Scenario
    baseline: Forecast
    conditioned: Forecast
    delta: np.ndarray


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise InvalidOption("forecast level must lie in (0, 1), got {!r}".format(level))


def _check_horizon(h):
    if int(h) < 1:
        raise InvalidHorizon("forecast horizon must be >= 1, got {}".format(h), module="forecast")
    return int(h)


def _form(report, T, h):
    form = build(report.spec, report.estimates, report.exog_obs, report.exog_state)
    covered = form.intercept_length
    if covered is not None and covered < T + h:
        logger.warning("[Forecast] exogenous paths end at period %d; zero intercept beyond",
                       covered)
    return form


def _observables(form, means, covs, start):
    n = means.shape[0]
    obs_mean = np.zeros((n, form.k))
    obs_var = np.zeros((n, form.k))
    for j in range(n):
        obs_mean[j] = form.Zmat @ means[j] + form.obs_intercept(start + j)
        obs_var[j] = np.diag(form.Zmat @ covs[j] @ form.Zmat.T + form.Hcov)
    return obs_mean, obs_var


def _assemble(form, means, covs, start, index, level, names):
    f = form.layout.factors
    obs_mean, obs_var = _observables(form, means, covs, start)
    return Forecast(
        index=index, level=float(level), names=tuple(names),
        factor_mean=means[:, f].copy(),
        factor_variance=np.diagonal(covs[:, f, f], axis1=1, axis2=2).copy(),
        observable_mean=obs_mean, observable_variance=obs_var,
        state_means=means, state_covs=covs,
    )


def forecast_from_state(form, mean, cov, start, h, level=0.9, index=None, names=()):
    """
    Iterate the transition equation h times from (mean, cov) at period ``start - 1``.

    :rtype Forecast:
    """
    h = _check_horizon(h)
    _check_level(level)
    means = np.zeros((h, form.m))
    covs = np.zeros((h, form.m, form.m))
    a, P = np.asarray(mean, dtype=float), np.asarray(cov, dtype=float)
    for j in range(h):
        a, P = predict(form, a, P, start + j)
        means[j], covs[j] = a, P
    return _assemble(form, means, covs, start, index, level, names)


def _require_converged(report):
    if not report.converged:
        raise NotConverged("forecasting needs a converged estimation report", module="forecast")


def forecast(report, panel, h, level=0.9):
    """
    h-step forecast from the filtered state at the sample end.

    :rtype Forecast:
    :raises NotConverged: the report did not converge.
    """
    _require_converged(report)
    h = _check_horizon(h)
    _check_level(level)
    form = _form(report, panel.T, h)
    fr = kalman_filter(form, panel)
    return forecast_from_state(form, fr.filtered_means[-1], fr.filtered_covs[-1], panel.T, h,
                               level, panel.index.extend(h), panel.names)


def _future_rows(panel, scenario, h, baseline):
    future = np.full((h, panel.k), np.nan)
    for o in scenario.overrides:
        if o.series not in panel.names:
            raise UnknownSeries("scenario {!r} overrides unknown series {!r}".format(
                scenario.name, o.series))
        pos = panel.index.position(o.period)
        if pos < panel.T:
            raise OverrideInSample("scenario {!r}: period {} is inside the sample (ends {})".format(
                scenario.name, o.period, panel.index.end))
        if pos >= panel.T + h:
            raise OverrideBeyondHorizon("scenario {!r}: period {} is beyond the {}-step horizon".format(
                scenario.name, o.period, h))
        j, col = pos - panel.T, panel.names.index(o.series)
        value = float(o.value)
        if scenario.kind is ScenarioKind.SHOCK_ONCE:
            value += baseline.observable_mean[j, col]
        future[j, col] = value
    return future


def run_scenario(report, panel, scenario, h, level=0.9):
    """
    Baseline forecast, forecast conditioned on the scenario overrides, and their factor gap.

    :rtype ScenarioResult:
    :raises UnknownSeries: an override names a series outside the panel.
    :raises OverrideInSample: an override period lies inside the sample.
    :raises OverrideBeyondHorizon: an override period lies after period T + h.
    """
    baseline = forecast(report, panel, h, level)
    form = _form(report, panel.T, h)
    future = _future_rows(panel, scenario, h, baseline)
    data = np.vstack([panel.values, future])
    fr = kalman_filter(form, data)
    means = fr.filtered_means[panel.T:]
    covs = fr.filtered_covs[panel.T:]
    conditioned = _assemble(form, means, covs, panel.T, baseline.index, level, panel.names)
    delta = conditioned.factor_mean - baseline.factor_mean
    logger.info("[Forecast] scenario %s: max |delta| %.4g", scenario.name,
                float(np.max(np.abs(delta))) if delta.size else 0.0)
    return ScenarioResult(scenario=scenario, baseline=baseline, conditioned=conditioned,
                          delta=delta)


def run_scenarios(report, panel, scenarios, h, level=0.9, threads=1):
    """Evaluate scenarios independently, at most ``threads`` at a time, in input order."""
    scenarios = list(scenarios)
    if int(threads) <= 1 or len(scenarios) <= 1:
        return [run_scenario(report, panel, s, h, level) for s in scenarios]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(lambda s: run_scenario(report, panel, s, h, level), scenarios))


def alert(forecast, history, rule, orientation=1):
    """
    Fire when the forecast factor mean stays above the ``rule.percentile`` value of the
    history for at least ``rule.consecutive`` consecutive future periods.

    :rtype AlertReport: the first breach is the start of the first qualifying run.
    """
    hist = orientation * np.asarray(history, dtype=float)
    if hist.ndim == 2:
        hist = hist[:, 0]
    path = orientation * np.asarray(forecast.factor_mean, dtype=float)
    if path.ndim == 2:
        path = path[:, 0]
    threshold = percentile_value(hist, rule.percentile)
    run = 0
    for j, value in enumerate(path):
        run = run + 1 if value > threshold else 0
        if run >= rule.consecutive:
            start = j - run + 1
            while start + run < path.size and path[start + run] > threshold:
                run += 1
            label = forecast.index.label(start) if forecast.index is not None else None
            logger.info("[Forecast] alert: factor above %.4g from %s", threshold, label)
            return AlertReport(fired=True, threshold=threshold, first_breach=label,
                               first_breach_step=start + 1, run_length=run)
    return AlertReport(fired=False, threshold=threshold)
