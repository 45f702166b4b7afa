"""
dfmrisk.timeseries
~~~~~~~~~~~~~~~~~~

This module provides the panel representation shared by every other module:
a regular :class:`TimeIndex <TimeIndex>`, the :class:`Panel <Panel>` of observed
series with NaN as the missing marker, and the standardization helpers.

Statistics use the population divisor N throughout; missing cells are kept
missing so that the Kalman filter, not an imputation step, handles them.

Usage::

  >>> from dfmrisk.timeseries import Panel, TimeIndex, Frequency, standardize
  >>> idx = TimeIndex("2000", Frequency.ANNUAL, 3)
  >>> z, stats = standardize(Panel(idx, ("gdp",), [[1.0], [2.0], [3.0]]))
"""

import logging
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from .exceptions import (
    DimensionMismatch,
    DuplicateSeriesName,
    FrequencyMismatch,
    InsufficientData,
    ZeroVarianceSeries,
    DataError,
)

logger = logging.getLogger(__name__)

_ANNUAL_RE = re.compile(r"^(\d{4})$")
_QUARTER_RE = re.compile(r"^(\d{4})-Q([1-4])$")
_MONTH_RE = re.compile(r"^(\d{4})-(0[1-9]|1[0-2])$")


class Frequency(Enum):
    ANNUAL = "annual"
    QUARTERLY = "quarterly"
    MONTHLY = "monthly"

    @property
    def periods_per_year(self):
        return {"annual": 1, "quarterly": 4, "monthly": 12}[self.value]

    @classmethod
    def parse(cls, text):
        """Accepts ``annual``/``quarterly``/``monthly`` (any case) or a Frequency."""
        if isinstance(text, Frequency):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise DataError("unknown frequency {!r}".format(text), module="timeseries")


def period_ordinal(label, freq):
    """
    Map a period label to an integer ordinal (consecutive periods differ by one).

    :param label (str): ``YYYY``, ``YYYY-Qn`` or ``YYYY-MM`` depending on ``freq``.
    :param freq (Frequency): the panel frequency.
    :rtype int: year * periods_per_year + (sub-period - 1).
    :raises DataError: if the label does not match the frequency.
    """
    text = str(label).strip()
    if freq is Frequency.ANNUAL:
        m = _ANNUAL_RE.match(text)
        if m:
            return int(m.group(1))
    elif freq is Frequency.QUARTERLY:
        m = _QUARTER_RE.match(text)
        if m:
            return int(m.group(1)) * 4 + int(m.group(2)) - 1
    else:
        m = _MONTH_RE.match(text)
        if m:
            return int(m.group(1)) * 12 + int(m.group(2)) - 1
    raise DataError("period {!r} is not a valid {} label".format(text, freq.value),
                    module="timeseries")


def period_label(ordinal, freq):
    """Inverse of :func:`period_ordinal`."""
    ppy = freq.periods_per_year
    year, sub = divmod(int(ordinal), ppy)
    if freq is Frequency.ANNUAL:
        return "{:04d}".format(year)
    if freq is Frequency.QUARTERLY:
        return "{:04d}-Q{}".format(year, sub + 1)
    return "{:04d}-{:02d}".format(year, sub + 1)


@dataclass(frozen=True)
class TimeIndex:
    """A regular run of ``length`` periods starting at the label ``start``."""

    start: str
    freq: Frequency
    length: int

    def __post_init__(self):
        object.__setattr__(self, "freq", Frequency.parse(self.freq))
        object.__setattr__(self, "start", str(self.start))
        if int(self.length) < 1:
            raise DataError("time index length must be >= 1, got {}".format(self.length),
                            module="timeseries")
        object.__setattr__(self, "length", int(self.length))
        period_ordinal(self.start, self.freq)

    @classmethod
    def from_ordinals(cls, first, last, freq):
        return cls(period_label(first, freq), freq, last - first + 1)

    @property
    def first_ordinal(self):
        return period_ordinal(self.start, self.freq)

    @property
    def last_ordinal(self):
        return self.first_ordinal + self.length - 1

    @property
    def end(self):
        return period_label(self.last_ordinal, self.freq)

    def __len__(self):
        return self.length

    def label(self, i):
        if not 0 <= i < self.length:
            raise IndexError("period position {} outside [0, {})".format(i, self.length))
        return period_label(self.first_ordinal + i, self.freq)

    def labels(self):
        first = self.first_ordinal
        return [period_label(first + i, self.freq) for i in range(self.length)]

    def position(self, label):
        """0-based position of ``label``; may fall outside [0, length) for out-of-sample labels."""
        return period_ordinal(label, self.freq) - self.first_ordinal

    def extend(self, h):
        """The ``h`` periods immediately after this index."""
        return TimeIndex(period_label(self.last_ordinal + 1, self.freq), self.freq, h)


@dataclass(frozen=True)
class SeriesStats:
    """Mean and population standard deviation of the non-missing entries."""

    mean: float
    std: float
    n_obs: int


@dataclass(frozen=True, eq=False)
class Panel:
    """The T x k matrix of observed series; NaN marks a missing cell."""

    index: TimeIndex
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise DimensionMismatch("panel values must be 2-D, got {}-D".format(values.ndim))
        if any(not n for n in names):
            raise DataError("series names must be non-empty", module="timeseries")
        if len(set(names)) != len(names):
            raise DuplicateSeriesName("duplicate series names in {}".format(list(names)))
        if values.shape != (self.index.length, len(names)):
            raise DimensionMismatch(
                "panel values have shape {}, expected ({}, {})".format(
                    values.shape, self.index.length, len(names)))
        for j, name in enumerate(names):
            if np.all(np.isnan(values[:, j])):
                raise InsufficientData(name, 0)
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    @property
    def T(self):
        return self.index.length

    @property
    def k(self):
        return len(self.names)

    @property
    def missing(self):
        return np.isnan(self.values)

    def column(self, name):
        try:
            j = self.names.index(name)
        except ValueError:
            raise DataError("unknown series {!r}".format(name), module="timeseries")
        return self.values[:, j]

    def select(self, names):
        cols = [self.names.index(n) for n in names]
        return Panel(self.index, tuple(names), self.values[:, cols])

    def with_values(self, values):
        return Panel(self.index, self.names, values)

    def to_frame(self):
        return pd.DataFrame(self.values, index=pd.Index(self.index.labels(), name="period"),
                            columns=list(self.names))


def series_stats(values, name="series"):
    """
    Mean, population std and count of the non-missing entries of ``values``.

    :raises InsufficientData: if fewer than two entries are present.
    """
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 2:
        raise InsufficientData(name, int(x.size))
    mean = float(np.mean(x))
    std = float(np.sqrt(np.mean((x - mean) ** 2)))
    return SeriesStats(mean=mean, std=std, n_obs=int(x.size))


def standardize(panel):
    """
    Rescale every column to non-missing mean 0 and population variance 1.

    :param panel (Panel): input panel.
    :rtype tuple: (standardized Panel, list of SeriesStats) in column order.
    :raises InsufficientData: a column has fewer than two values.
    :raises ZeroVarianceSeries: a column is constant.
    """
    stats = []
    out = np.array(panel.values, dtype=float)
    for j, name in enumerate(panel.names):
        st = series_stats(panel.values[:, j], name)
        if st.std <= 1e-14 * max(1.0, abs(st.mean)):
            raise ZeroVarianceSeries(name)
        out[:, j] = (panel.values[:, j] - st.mean) / st.std
        stats.append(st)
    return panel.with_values(out), stats


def destandardize(panel, stats):
    """Map standardized values back with ``x * std + mean`` column by column."""
    if len(stats) != panel.k:
        raise DimensionMismatch(
            "{} statistics for a panel with {} columns".format(len(stats), panel.k))
    out = np.array(panel.values, dtype=float)
    for j, st in enumerate(stats):
        if not st.std > 0:
            raise ZeroVarianceSeries(panel.names[j])
        out[:, j] = panel.values[:, j] * st.std + st.mean
    return panel.with_values(out)


def is_standardized(panel, tol=1e-6):
    """True when every column has non-missing mean within ``tol`` of 0 and variance within ``tol`` of 1."""
    for j in range(panel.k):
        x = panel.values[:, j]
        x = x[~np.isnan(x)]
        if x.size < 2:
            return False
        mean = np.mean(x)
        if abs(mean) > tol or abs(np.mean((x - mean) ** 2) - 1.0) > tol:
            return False
    return True


def align(panels):
    """
    Join panels of one frequency on the union of their periods.

    Cells a source does not cover are missing; columns keep input order.

    :raises FrequencyMismatch: the panels do not share a frequency.
    :raises DuplicateSeriesName: two panels carry the same series name.
    """
    panels = list(panels)
    if not panels:
        raise DataError("align needs at least one panel", module="timeseries")
    freq = panels[0].index.freq
    for p in panels[1:]:
        if p.index.freq is not freq:
            raise FrequencyMismatch("cannot align {} with {}".format(
                freq.value, p.index.freq.value))
    names = [n for p in panels for n in p.names]
    seen = set()
    for n in names:
        if n in seen:
            raise DuplicateSeriesName("series {!r} appears in more than one panel".format(n))
        seen.add(n)
    first = min(p.index.first_ordinal for p in panels)
    last = max(p.index.last_ordinal for p in panels)
    values = np.full((last - first + 1, len(names)), np.nan)
    col = 0
    for p in panels:
        row = p.index.first_ordinal - first
        values[row:row + p.T, col:col + p.k] = p.values
        col += p.k
    logger.debug("[Timeseries] aligned %d panels into %d periods", len(panels), last - first + 1)
    return Panel(TimeIndex.from_ordinals(first, last, freq), tuple(names), values)
