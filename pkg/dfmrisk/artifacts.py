"""
dfmrisk.artifacts
~~~~~~~~~~~~~~~~~

This module provides the :class:`ArtifactWriter <ArtifactWriter>` that persists run
outputs, and the builders that turn reports into tables.

Every file is written to a temporary file in the output directory and then
renamed over the target, so a reader never sees a half-written artifact. Numbers
are written with 17 significant digits; missing cells are written as ``NA``.

Artifacts:
----------
- ``estimation.csv`` / ``estimation.txt``: parameter, estimate, std_err, z, p
- ``factor_path.csv``: period, filtered and smoothed factors, smoothed bands
- ``contributions.csv``: series ranked by |z| of their loading
- ``reduction.csv``: kept and dropped series with the drop round
- ``risk.json``: trend, volatility, percentile of the latest value, alert
- ``forecast.csv``: factor and observable forecasts with bands
- ``scenario_<name>.csv``: baseline, conditioned and delta factor paths; the name is
  reduced to ``[A-Za-z0-9_.-]``
- ``manifest.json`` (simulate): SHA-256 of the simulated files, seed and periods
- ``metadata.json``: config echo, versions, diagnostics
"""

import hashlib
import json
import logging
import os
import re
import tempfile
import threading

import numpy as np
import pandas as pd
from scipy import stats

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MISSING = "NA"
UNSAFE_NAME = re.compile(r"[^A-Za-z0-9_.-]")


def _fmt(value, width=0):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return MISSING.rjust(width)
    return (FLOAT_FORMAT % value).rjust(width)


def frame_to_csv(frame):
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep=MISSING,
                        lineterminator="\n")


class ArtifactWriter:
    """Atomic writer rooted at one output directory.

    :param out_dir (str): directory created on first use.

    Usage::

      >>> writer = ArtifactWriter("out")
      >>> writer.write_json("risk.json", {"volatility": 1.0})
    """

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.written = []
        self._lock = threading.Lock()

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def write_text(self, name, text):
        with self._lock:
            os.makedirs(self.out_dir, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=".{}.".format(name), dir=self.out_dir)
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
                os.replace(tmp, self.path(name))
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
            self.written.append(name)
        logger.debug("[Artifacts] wrote %s", self.path(name))
        return self.path(name)

    def write_csv(self, name, frame):
        return self.write_text(name, frame_to_csv(frame))

    def write_json(self, name, payload):
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def scenario_filename(name):
    """Output file of a scenario; characters outside ``[A-Za-z0-9_.-]`` become ``_``."""
    return "scenario_{}.csv".format(UNSAFE_NAME.sub("_", str(name)))


def estimation_frame(report):
    rows = report.rows()
    return pd.DataFrame(rows, columns=["parameter", "estimate", "std_err", "z", "p"])


def estimation_text(report):
    """Plain-text coefficient table followed by the fit summary."""
    rows = report.rows()
    width = max([len("parameter")] + [len(r[0]) for r in rows])
    header = "{}  {:>24}  {:>24}  {:>24}  {:>24}".format(
        "parameter".ljust(width), "estimate", "std_err", "z", "p")
    lines = [
        "model: {} (k={}, n_f={}, p={}, q={}, n_x={}, n_w={})".format(
            report.model_kind.value, report.spec.k, report.spec.n_f, report.spec.p,
            report.spec.q, report.spec.n_x, report.spec.n_w),
        "sample: {} .. {} ({} periods)".format(report.index.start, report.index.end,
                                               report.index.length),
        "",
        header,
        "-" * len(header),
    ]
    for name, est, se, z, p in rows:
        lines.append("{}  {}  {}  {}  {}".format(
            name.ljust(width), _fmt(est, 24), _fmt(se, 24), _fmt(z, 24), _fmt(p, 24)))
    lines += [
        "",
        "log-likelihood: {}".format(_fmt(report.log_likelihood)),
        "converged: {}  iterations: {}  scaled gradient: {}".format(
            "yes" if report.converged else "no", report.iterations, _fmt(report.gradient_norm)),
    ]
    lines += ["note: {}".format(d) for d in report.diagnostics]
    return "\n".join(lines) + "\n"


def factor_path_frame(report, level=0.9):
    z = float(stats.norm.ppf(0.5 * (1.0 + level)))
    data = {"period": report.index.labels()}
    for j in range(report.spec.n_f):
        tag = "f{}".format(j + 1)
        smoothed = report.factor_path[:, j]
        half = z * np.sqrt(report.factor_variance[:, j])
        data[tag + "_filtered"] = report.filtered_factor_path[:, j]
        data[tag + "_smoothed"] = smoothed
        data[tag + "_lower"] = smoothed - half
        data[tag + "_upper"] = smoothed + half
    return pd.DataFrame(data)


def contributions_frame(contributions):
    return pd.DataFrame([(c.series, c.loading, c.z, c.p, c.rank) for c in contributions],
                        columns=["series", "loading", "z", "p", "rank"])


def reduction_frame(selection):
    rows = [(s, "kept", None) for s in selection.kept]
    rows += [(s, "dropped", r) for s, r in zip(selection.dropped, selection.drop_rounds)]
    return pd.DataFrame(rows, columns=["series", "status", "round"]).astype({"round": "Int64"})


def forecast_frame(fc, series_stats=None):
    data = {"period": fc.index.labels()}
    lower, upper = fc.factor_bands()
    for j in range(fc.factor_mean.shape[1]):
        tag = "f{}".format(j + 1)
        data[tag + "_mean"] = fc.factor_mean[:, j]
        data[tag + "_lower"] = lower[:, j]
        data[tag + "_upper"] = upper[:, j]
    if series_stats is not None:
        means, lo, hi = fc.destandardized(series_stats)
    else:
        means = fc.observable_mean
        lo, hi = fc.observable_bands()
    for i, name in enumerate(fc.names):
        data[name + "_mean"] = means[:, i]
        data[name + "_lower"] = lo[:, i]
        data[name + "_upper"] = hi[:, i]
    return pd.DataFrame(data)


def scenario_frame(result):
    data = {"period": result.baseline.index.labels()}
    for j in range(result.delta.shape[1]):
        tag = "f{}".format(j + 1)
        data[tag + "_baseline"] = result.baseline.factor_mean[:, j]
        data[tag + "_scenario"] = result.conditioned.factor_mean[:, j]
        data[tag + "_delta"] = result.delta[:, j]
    return pd.DataFrame(data)
