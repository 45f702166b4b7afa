import dataclasses

import numpy as np
import pytest

from dfmrisk.exceptions import (
    InvalidHorizon,
    InvalidOption,
    NotConverged,
    OverrideBeyondHorizon,
    OverrideInSample,
    UnknownSeries,
)
from dfmrisk.forecast import (
    AlertRule,
    Forecast,
    Override,
    Scenario,
    ScenarioKind,
    alert,
    forecast,
    forecast_from_state,
    run_scenario,
    run_scenarios,
)
from dfmrisk.kalman import kalman_filter
from dfmrisk.state_space import StateLayout, StateSpaceForm, simulate
from dfmrisk.timeseries import Frequency, TimeIndex


def scalar_form(T, Q, Z=1.0, H=0.0):
    return StateSpaceForm(
        Tmat=[[T]], Zmat=[[Z]], Qcov=[[Q]], Hcov=[[H]],
        layout=StateLayout(n_f=1, factor_lags=1, k=1, q=0))


def path_forecast(values, start="2000"):
    values = np.asarray(values, dtype=float).reshape(-1, 1)
    return Forecast(index=TimeIndex(start, Frequency.ANNUAL, values.shape[0]), level=0.9,
                    names=("y",), factor_mean=values, factor_variance=np.ones_like(values),
                    observable_mean=values, observable_variance=np.ones_like(values))


# ---- forecasts from a known state ----

def test_factor_means_decay_geometrically():
    fc = forecast_from_state(scalar_form(0.5, 1.0), [1.0], [[0.0]], start=0, h=3)
    np.testing.assert_array_equal(fc.factor_mean[:, 0], [0.5, 0.25, 0.125])
    assert fc.horizon == 3


def test_one_step_variance():
    fc = forecast_from_state(scalar_form(0.5, 1.0, H=0.2), [0.0], [[0.3]], start=0, h=1)
    assert fc.factor_variance[0, 0] == pytest.approx(0.25 * 0.3 + 1.0, rel=1e-15)
    assert fc.observable_variance[0, 0] == pytest.approx(0.25 * 0.3 + 1.0 + 0.2, rel=1e-15)


def test_long_horizon_reaches_unconditional_variance():
    fc = forecast_from_state(scalar_form(0.5, 1.0), [2.0], [[0.0]], start=0, h=200)
    assert abs(fc.factor_variance[-1, 0] - 4.0 / 3.0) < 1e-6
    assert abs(fc.factor_mean[-1, 0]) < 1e-6


def test_bands_are_symmetric():
    fc = forecast_from_state(scalar_form(0.8, 1.0, H=0.5), [1.0], [[0.2]], start=0, h=5, level=0.8)
    lower, upper = fc.factor_bands()
    np.testing.assert_allclose(fc.factor_mean - lower, upper - fc.factor_mean, rtol=1e-12)
    assert np.all(upper > lower)
    lo, hi = fc.observable_bands()
    np.testing.assert_allclose(hi - lo, 2 * fc.z * np.sqrt(fc.observable_variance), rtol=1e-12)


def test_forecast_argument_errors():
    form = scalar_form(0.5, 1.0)
    with pytest.raises(InvalidHorizon):
        forecast_from_state(form, [0.0], [[1.0]], start=0, h=0)
    with pytest.raises(InvalidOption):
        forecast_from_state(form, [0.0], [[1.0]], start=0, h=2, level=1.0)


def test_one_step_band_coverage():
    form = scalar_form(0.7, 1.0, H=0.5)
    n, covered, reps = 30, 0, 500
    for seed in range(reps):
        panel, _ = simulate(form, n + 1, seed=seed)
        y = panel.values
        fr = kalman_filter(form, y[:n])
        fc = forecast_from_state(form, fr.filtered_means[-1], fr.filtered_covs[-1],
                                 start=n, h=1, level=0.9)
        lo, hi = fc.observable_bands()
        covered += lo[0, 0] <= y[n, 0] <= hi[0, 0]
    assert 0.86 <= covered / reps <= 0.94


# ---- forecasts and scenarios on a fitted model ----

def test_forecast_from_fitted_report(fitted_one_factor):
    report, panel, series_stats = fitted_one_factor
    fc = forecast(report, panel, 8)
    assert fc.factor_mean.shape == (8, 1)
    assert fc.observable_mean.shape == (8, panel.k)
    assert fc.index.start == "1950" and fc.index.end == "1957"
    assert np.all(np.diff(fc.factor_variance[:, 0]) >= -1e-12)
    mean, lower, upper = fc.destandardized(series_stats)
    assert mean.shape == (8, panel.k)
    assert np.all(lower < mean) and np.all(mean < upper)
    again = forecast(report, panel, 8)
    np.testing.assert_array_equal(again.factor_mean, fc.factor_mean)


def test_forecast_requires_convergence(fitted_one_factor):
    report, panel, _ = fitted_one_factor
    with pytest.raises(NotConverged):
        forecast(dataclasses.replace(report, converged=False), panel, 4)
    with pytest.raises(InvalidHorizon):
        forecast(report, panel, 0)


def test_empty_scenario_has_zero_delta(fitted_one_factor):
    report, panel, _ = fitted_one_factor
    result = run_scenario(report, panel, Scenario("empty"), 6)
    np.testing.assert_array_equal(result.delta, np.zeros((6, 1)))


def test_override_at_baseline_value_changes_nothing(fitted_one_factor):
    report, panel, _ = fitted_one_factor
    baseline = forecast(report, panel, 6)
    value = float(baseline.observable_mean[2, 0])
    result = run_scenario(report, panel, Scenario("flat", overrides=(Override("ca", "1952", value),)), 6)
    np.testing.assert_allclose(result.delta, 0.0, atol=1e-12)


def test_zero_shock_changes_nothing(fitted_one_factor):
    report, panel, _ = fitted_one_factor
    scenario = Scenario("zero", ScenarioKind.SHOCK_ONCE, (Override("fx", "1950", 0.0),))
    np.testing.assert_allclose(run_scenario(report, panel, scenario, 4).delta, 0.0, atol=1e-12)


def test_upward_override_raises_factor(fitted_one_factor):
    report, panel, _ = fitted_one_factor
    baseline = forecast(report, panel, 6)
    value = float(baseline.observable_mean[1, 0]) + 1.0
    result = run_scenario(report, panel, Scenario("up", overrides=(Override("ca", "1951", value),)), 6)
    assert result.delta[1, 0] > 0
    assert np.all(result.delta[:1] == 0.0)
    shock = Scenario("shock", ScenarioKind.SHOCK_ONCE, (Override("ca", "1951", 1.0),))
    np.testing.assert_allclose(run_scenario(report, panel, shock, 6).delta, result.delta, atol=1e-12)


def test_zero_loading_series_carries_no_information(fitted_one_factor):
    report, panel, _ = fitted_one_factor
    P = np.array(report.estimates.P)
    P[panel.names.index("cpi")] = 0.0
    muted = dataclasses.replace(report, estimates=report.estimates.replace(P=P))
    scenario = Scenario("cpi", overrides=(Override("cpi", "1951", 3.0),))
    np.testing.assert_allclose(run_scenario(muted, panel, scenario, 4).delta, 0.0, atol=1e-10)


@pytest.mark.parametrize("override,error", [
    (Override("gdp", "1951", 1.0), UnknownSeries),
    (Override("ca", "1900", 1.0), OverrideInSample),
    (Override("ca", "1949", 1.0), OverrideInSample),
    (Override("ca", "1954", 1.0), OverrideBeyondHorizon),
])
def test_scenario_errors(fitted_one_factor, override, error):
    report, panel, _ = fitted_one_factor
    with pytest.raises(error):
        run_scenario(report, panel, Scenario("bad", overrides=(override,)), 4)


def test_scenarios_run_in_parallel_match_serial(fitted_one_factor):
    report, panel, _ = fitted_one_factor
    scenarios = [Scenario("s{}".format(i), ScenarioKind.SHOCK_ONCE,
                          (Override("reserves", "1951", 0.5 * i),)) for i in range(4)]
    serial = run_scenarios(report, panel, scenarios, 4, threads=1)
    parallel = run_scenarios(report, panel, scenarios, 4, threads=3)
    assert [r.scenario.name for r in parallel] == ["s0", "s1", "s2", "s3"]
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.delta, b.delta)


def test_scenario_kind_parse():
    assert ScenarioKind.parse("PathOverride") is ScenarioKind.PATH_OVERRIDE
    assert ScenarioKind.parse("shock_once") is ScenarioKind.SHOCK_ONCE
    with pytest.raises(InvalidOption):
        ScenarioKind.parse("Reverse")


# ---- alert rule ----

HISTORY = np.arange(1.0, 10.0)


def test_alert_quiet_below_median():
    report = alert(path_forecast([1.0, 2.0, 3.0, 2.0]), HISTORY, AlertRule(0.9, 2))
    assert not report.fired
    assert report.threshold == 9.0


def test_alert_fires_at_start_of_run():
    report = alert(path_forecast([7.0, 8.0, 9.5, 10.0, 11.0]), HISTORY, AlertRule(0.9, 2))
    assert report.fired
    assert report.first_breach == "2002" and report.first_breach_step == 3
    assert report.run_length == 3


def test_alert_needs_consecutive_breaches():
    report = alert(path_forecast([9.5, 8.0, 9.5, 8.0]), HISTORY, AlertRule(0.9, 2))
    assert not report.fired


def test_alert_window_longer_than_horizon_never_fires():
    report = alert(path_forecast([20.0, 21.0]), HISTORY, AlertRule(0.9, 3))
    assert not report.fired


def test_alert_orientation():
    report = alert(path_forecast([-20.0, -21.0]), HISTORY - 10.0, AlertRule(0.9, 2), orientation=-1)
    assert report.fired and report.first_breach_step == 1


@pytest.mark.parametrize("kwargs", [dict(percentile=1.0), dict(consecutive=0)])
def test_alert_rule_validation(kwargs):
    with pytest.raises(InvalidOption):
        AlertRule(**kwargs)
