"""
dfmrisk.config
~~~~~~~~~~~~~~

This module loads the YAML run configuration into frozen dataclasses.

Rules:
------
- the document carries ``version: 1``; other versions are rejected;
- unknown keys at any level are a :class:`ConfigError`;
- relative paths resolve against the directory of the config file;
- command-line overrides (``out``, ``seed``, ``alpha``, ``horizon``, ``threads``)
  replace the document values after loading.

Usage::

  >>> cfg = load_config("run.yaml", overrides={"seed": 7})
  >>> cfg.model.spec(k=5)
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field

import yaml

from .estimation import FitOptions
from .exceptions import ConfigError, InvalidOption
from .forecast import AlertRule
from .model_spec import DfmSpec
from .risk import RiskOptions
from .timeseries import Frequency

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1

_SECTIONS = {
    "version", "data", "model", "fit", "risk", "forecast", "alert",
    "scenarios", "output", "seed", "threads",
}


@dataclass(frozen=True)
class DataConfig:
    path: str
    frequency: Frequency = Frequency.ANNUAL
    series: tuple = None
    rename: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelConfig:
    factors: int = 1
    factor_lags: int = 1
    error_lags: int = 0
    exog_obs: tuple = ()
    exog_state: tuple = ()

    def spec(self, k):
        return DfmSpec(k=k, n_f=self.factors, n_x=len(self.exog_obs), n_w=len(self.exog_state),
                       p=self.factor_lags, q=self.error_lags)


@dataclass(frozen=True)
class ForecastOptions:
    horizon: int = 8
    level: float = 0.9

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise InvalidOption("forecast horizon must be >= 1, got {!r}".format(self.horizon))
        if not 0.0 < self.level < 1.0:
            raise InvalidOption("forecast level must lie in (0, 1), got {!r}".format(self.level))


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig
    model: ModelConfig = ModelConfig()
    fit: FitOptions = FitOptions()
    reduce: bool = False
    risk: RiskOptions = RiskOptions()
    forecast: ForecastOptions = ForecastOptions()
    alert: AlertRule = AlertRule()
    scenarios: tuple = ()
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    version: int = CONFIG_VERSION

    def echo(self):
        """Plain-data view of the configuration for the run metadata."""
        def plain(value):
            if isinstance(value, Frequency):
                return value.value
            if dataclasses.is_dataclass(value):
                return {f.name: plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
            if isinstance(value, (list, tuple)):
                return [plain(v) for v in value]
            if isinstance(value, dict):
                return {str(k): plain(v) for k, v in value.items()}
            return value
        return plain(self)


def _section(doc, name, allowed):
    value = doc.get(name) or {}
    if not isinstance(value, dict):
        raise InvalidOption("section {!r} must be a mapping".format(name))
    unknown = set(value) - set(allowed)
    if unknown:
        raise InvalidOption("unknown keys in {!r}: {}".format(name, sorted(unknown)))
    return value


def _resolve(base, path):
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base, path))


def _build(kind, values, section):
    try:
        return kind(**values)
    except (TypeError, ValueError) as e:
        raise InvalidOption("section {!r}: {}".format(section, e))


def parse_config(doc, base_dir="."):
    """
    Build a RunConfig from a parsed YAML document.

    :raises ConfigError: wrong version, unknown keys or invalid values.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise InvalidOption("unknown top-level keys: {}".format(sorted(unknown)))
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise InvalidOption("unsupported config version {!r} (expected {})".format(
            version, CONFIG_VERSION))

    data = _section(doc, "data", ("path", "frequency", "series", "rename"))
    if not data.get("path"):
        raise InvalidOption("data.path is required")
    try:
        frequency = Frequency.parse(data.get("frequency", "annual"))
    except Exception as e:
        raise InvalidOption(str(e))
    series = data.get("series")
    data_cfg = DataConfig(
        path=_resolve(base_dir, str(data["path"])), frequency=frequency,
        series=tuple(str(s) for s in series) if series else None,
        rename={str(k): str(v) for k, v in (data.get("rename") or {}).items()},
    )

    model = _section(doc, "model", ("factors", "factor_lags", "error_lags",
                                    "exog_obs", "exog_state"))
    model_cfg = _build(ModelConfig, {
        "factors": int(model.get("factors", 1)),
        "factor_lags": int(model.get("factor_lags", 1)),
        "error_lags": int(model.get("error_lags", 0)),
        "exog_obs": tuple(str(s) for s in model.get("exog_obs") or ()),
        "exog_state": tuple(str(s) for s in model.get("exog_state") or ()),
    }, "model")

    seed = int(doc.get("seed", 0))
    fit = dict(_section(doc, "fit", ("max_iter", "tolerance", "gradient_tolerance", "alpha",
                                      "reduce", "em_warm_start", "em_iterations")))
    reduce = bool(fit.pop("reduce", False))
    fit_cfg = _build(FitOptions, dict(fit, seed=seed), "fit")
    if not 0.0 < fit_cfg.alpha < 1.0:
        raise InvalidOption("fit.alpha must lie in (0, 1), got {!r}".format(fit_cfg.alpha))

    risk_cfg = _build(RiskOptions, _section(doc, "risk", ("window", "threshold", "orientation")),
                      "risk")
    forecast_cfg = _build(ForecastOptions, _section(doc, "forecast", ("horizon", "level")),
                          "forecast")
    alert_cfg = _build(AlertRule, _section(doc, "alert", ("percentile", "consecutive")), "alert")
    output = _section(doc, "output", ("dir",))
    scenarios = doc.get("scenarios") or []
    if isinstance(scenarios, str):
        scenarios = [scenarios]

    return RunConfig(
        data=data_cfg, model=model_cfg, fit=fit_cfg, reduce=reduce, risk=risk_cfg,
        forecast=forecast_cfg, alert=alert_cfg,
        scenarios=tuple(_resolve(base_dir, str(s)) for s in scenarios),
        out_dir=_resolve(base_dir, str(output.get("dir", "out"))),
        seed=seed, threads=max(1, int(doc.get("threads", 1))), version=version,
    )


def apply_overrides(cfg, overrides):
    """Replace config values with command-line flags that were given (None means absent)."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if not overrides:
        return cfg
    changes = {}
    if "out" in overrides:
        changes["out_dir"] = str(overrides["out"])
    if "seed" in overrides:
        changes["seed"] = int(overrides["seed"])
        changes["fit"] = dataclasses.replace(changes.get("fit", cfg.fit), seed=int(overrides["seed"]))
    if "alpha" in overrides:
        alpha = float(overrides["alpha"])
        if not 0.0 < alpha < 1.0:
            raise InvalidOption("--alpha must lie in (0, 1), got {!r}".format(alpha))
        changes["fit"] = dataclasses.replace(changes.get("fit", cfg.fit), alpha=alpha)
    if "horizon" in overrides:
        changes["forecast"] = ForecastOptions(horizon=int(overrides["horizon"]),
                                              level=cfg.forecast.level)
    if "threads" in overrides:
        changes["threads"] = max(1, int(overrides["threads"]))
    logger.debug("[Config] command-line overrides %s", sorted(overrides))
    return dataclasses.replace(cfg, **changes)


def load_config(path, overrides=None):
    """
    Read and validate a YAML run configuration.

    :param path (str): config file.
    :param overrides (dict): command-line values keyed by flag name.
    :rtype RunConfig:
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError("cannot read config {}: {}".format(path, e))
    except yaml.YAMLError as e:
        raise ConfigError("config {} is not valid YAML: {}".format(path, e))
    cfg = parse_config(doc, os.path.dirname(os.path.abspath(path)))
    return apply_overrides(cfg, overrides)
