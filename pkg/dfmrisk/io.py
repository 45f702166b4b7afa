"""
dfmrisk.io
~~~~~~~~~~

Readers and writers for the panel CSV, scenario documents and simulation
parameter files.

Panel CSV:
----------
- the header row names the series; the first column holds the period label
  (``YYYY``, ``YYYY-Qn`` or ``YYYY-MM``);
- empty cells and the literal ``NA`` are missing;
- rows are sorted by period and gaps are filled with all-missing rows;
- line numbers in errors count the header as line 1.

Scenario document (YAML)::

    name: ca_worsening
    kind: PathOverride          # or ShockOnce
    overrides:
      - {series: current_account, period: "2024", value: -1.5}
"""

import logging

import numpy as np
import pandas as pd
import yaml

from .artifacts import FLOAT_FORMAT, MISSING
from .exceptions import (
    ConfigError,
    DataError,
    DuplicateSeriesName,
    InvalidOption,
    NonMonotonicPeriods,
    ParseError,
    UnknownSeries,
)
from .forecast import Override, Scenario, ScenarioKind
from .timeseries import Frequency, Panel, TimeIndex, period_ordinal

logger = logging.getLogger(__name__)

MISSING_TOKENS = ("", "NA")


def _cell(text, line, column):
    token = text.strip()
    if token in MISSING_TOKENS:
        return np.nan
    try:
        value = float(token)
    except ValueError:
        raise ParseError(line, column, "cannot parse {!r} as a number".format(token))
    if not np.isfinite(value):
        raise ParseError(line, column, "non-finite value {!r}".format(token))
    return value


def read_panel(path, frequency, selection=None, rename=None):
    """
    Read a panel CSV.

    :param path (str): CSV file.
    :param frequency (Frequency or str): period frequency of the first column.
    :param selection (list): series to keep, in order, named after ``rename``.
    :param rename (dict): old name -> new name, applied before selection.
    :rtype Panel:
    :raises ParseError: malformed header, period or cell.
    :raises NonMonotonicPeriods: a period appears twice.
    :raises UnknownSeries: a selected series is not in the file.
    """
    freq = Frequency.parse(frequency)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise ParseError(0, 0, str(e))
    except pd.errors.EmptyDataError:
        raise ParseError(1, 1, "empty file")
    except OSError as e:
        raise DataError("cannot read panel {}: {}".format(path, e), module="io")
    if raw.shape[1] < 2:
        raise ParseError(1, 1, "expected a period column and at least one series")
    names = [str(c).strip() for c in raw.columns[1:]]
    if rename:
        names = [rename.get(n, n) for n in names]
    if len(set(names)) != len(names):
        raise DuplicateSeriesName("duplicate series names in header: {}".format(names))

    ordinals, rows = [], []
    seen = {}
    for r, record in enumerate(raw.itertuples(index=False, name=None)):
        line = r + 2
        try:
            ordinal = period_ordinal(record[0], freq)
        except DataError as e:
            raise ParseError(line, 1, str(e))
        if ordinal in seen:
            raise NonMonotonicPeriods("period {} repeated on lines {} and {}".format(
                record[0].strip(), seen[ordinal], line))
        seen[ordinal] = line
        ordinals.append(ordinal)
        rows.append([_cell(v, line, c + 2) for c, v in enumerate(record[1:])])
    if not rows:
        raise ParseError(2, 1, "no data rows")

    first, last = min(ordinals), max(ordinals)
    values = np.full((last - first + 1, len(names)), np.nan)
    for ordinal, row in zip(ordinals, rows):
        values[ordinal - first] = row
    if last - first + 1 > len(rows):
        logger.info("[IO] %s: filled %d missing periods", path, last - first + 1 - len(rows))

    if selection is not None:
        missing = [s for s in selection if s not in names]
        if missing:
            raise UnknownSeries("series {} not found in {}".format(missing, path))
        cols = [names.index(s) for s in selection]
        names = list(selection)
        values = values[:, cols]
    return Panel(TimeIndex.from_ordinals(first, last, freq), tuple(names), values)


def write_panel(panel, path):
    """Write ``panel`` in the CSV layout :func:`read_panel` accepts."""
    frame = panel.to_frame().reset_index()
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep=MISSING,
                 lineterminator="\n")
    return path


def _load_yaml(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError("cannot read {}: {}".format(path, e), module="io")
    except yaml.YAMLError as e:
        raise ConfigError("{} is not valid YAML: {}".format(path, e), module="io")


def parse_scenario(doc, source="scenario"):
    if not isinstance(doc, dict):
        raise InvalidOption("{}: expected a mapping".format(source))
    unknown = set(doc) - {"name", "kind", "overrides"}
    if unknown:
        raise InvalidOption("{}: unknown keys {}".format(source, sorted(unknown)))
    try:
        overrides = tuple(Override(series=str(o["series"]), period=str(o["period"]),
                                   value=float(o["value"]))
                          for o in doc.get("overrides") or [])
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidOption("{}: malformed override ({})".format(source, e))
    return Scenario(name=str(doc.get("name") or source),
                    kind=ScenarioKind.parse(doc.get("kind", "PathOverride")),
                    overrides=overrides)


def load_scenario(path):
    """Read a scenario document; a list of documents yields several scenarios."""
    doc = _load_yaml(path)
    if isinstance(doc, list):
        return [parse_scenario(d, "{}[{}]".format(path, i)) for i, d in enumerate(doc)]
    return [parse_scenario(doc, path)]


def load_params(path):
    """Raw simulation parameter document (``spec``, blocks, ``noise_scale``, ``names``)."""
    doc = _load_yaml(path)
    if not isinstance(doc, dict):
        raise InvalidOption("{}: expected a mapping".format(path), module="io")
    return doc
