"""
dfmrisk
~~~~~~~

Dynamic factor models for macroeconomic risk: state-space maximum likelihood,
z-statistics, latent-trend/volatility/percentile risk measures, forecasts and
scenario conditioning.
"""

__version__ = "1.0.0"

from .exceptions import ConfigError, DataError, DfmError, NumericalError
from .model_spec import DfmSpec, ParamSet, classify, count_parameters, pack, unpack
from .timeseries import Frequency, Panel, TimeIndex, destandardize, standardize
from .state_space import build, simulate, stationary_initialization
from .kalman import kalman_filter, kalman_smoother, loglik
from .estimation import FitOptions, fit, initialize, persistence, reduce, zstat
from .risk import latent_trend, percentile_rank, percentile_value, volatility
from .forecast import AlertRule, Scenario, alert, forecast, run_scenario
from .router import DfmApp
