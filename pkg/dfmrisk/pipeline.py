"""
dfmrisk.pipeline
~~~~~~~~~~~~~~~~

This module runs the stages of one analysis and writes their artifacts:

    read -> standardize -> fit -> (reduce) -> risk -> forecast -> scenarios

A stage runs every stage before it; ``all`` runs the whole chain with the
reduction step only when the configuration asks for it. Any package error
propagates to the caller with its module provenance; artifacts of the stages
that completed stay on disk and ``metadata.json`` is written last.
"""

import logging
import os
import platform
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy
import statsmodels
import yaml

from . import __version__
from .artifacts import (
    ArtifactWriter,
    frame_to_csv,
    contributions_frame,
    estimation_frame,
    estimation_text,
    factor_path_frame,
    file_sha256,
    forecast_frame,
    reduction_frame,
    scenario_filename,
    scenario_frame,
)
from .estimation import fit, rank_contributions, reduce
from .exceptions import DataError, DimensionMismatch, InvalidOption, UnknownSeries, UnknownStage
from .forecast import alert, forecast, run_scenarios
from .io import load_params, load_scenario, read_panel
from .model_spec import DfmSpec, ParamSet, classify, count_parameters, count_var_parameters
from .risk import risk_summary
from .state_space import build, is_stationary, simulate
from .timeseries import Frequency, TimeIndex, standardize

logger = logging.getLogger(__name__)

STAGES = ("estimate", "reduce", "risk", "forecast", "scenario", "all")


@dataclass
class RunArtifacts:
    out_dir: str
    files: list = field(default_factory=list)
    report: object = None
    selection: object = None
    reduced: object = None
    risk: object = None
    forecast: object = None
    alert: object = None
    scenarios: list = field(default_factory=list)

    @property
    def final_report(self):
        return self.reduced if self.reduced is not None else self.report


def _versions():
    return {
        "dfmrisk": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "statsmodels": statsmodels.__version__,
        "pyyaml": yaml.__version__,
    }


def _exog(raw, names):
    if not names:
        return None
    path = raw.select(list(names)).values
    if np.isnan(path).any():
        raise DataError("exogenous columns {} contain missing cells".format(list(names)),
                        module="pipeline")
    return path


def load_inputs(config):
    """Read the panel, split off exogenous columns and standardize the observed series."""
    data = config.data
    raw = read_panel(data.path, data.frequency, rename=data.rename or None)
    exog = set(config.model.exog_obs) | set(config.model.exog_state)
    series = list(data.series) if data.series else [n for n in raw.names if n not in exog]
    unknown = [s for s in list(series) + sorted(exog) if s not in raw.names]
    if unknown:
        raise UnknownSeries("series {} not found in {}".format(unknown, data.path))
    observed = raw.select(series)
    z, stats = standardize(observed)
    logger.info("[Pipeline] %s: %d series, %s .. %s", data.path, z.k, z.index.start, z.index.end)
    return z, stats, _exog(raw, config.model.exog_obs), _exog(raw, config.model.exog_state)


def _notes(report):
    form = build(report.spec, report.estimates, report.exog_obs, report.exog_state)
    return {
        "factor_path": "smoothed",
        "standardization": "full-sample",
        "initialization": "stationary" if is_stationary(form) else "diffuse",
        "p_values": "two-sided standard normal",
    }


def load_scenarios(paths):
    """
    Scenarios from every document in ``paths``, in order.

    :raises InvalidOption: two scenarios share an output file name.
    """
    scenarios, seen = [], {}
    for path in paths:
        for scenario in load_scenario(path):
            name = scenario_filename(scenario.name)
            if name in seen:
                raise InvalidOption("scenario {!r} in {} clashes with {!r} (both write {})".format(
                    scenario.name, path, seen[name], name), module="pipeline")
            seen[name] = scenario.name
            scenarios.append(scenario)
    return scenarios


def _metadata(config, stage, artifacts, stats):
    report = artifacts.final_report
    echo = config.echo()
    echo.pop("out_dir", None)
    meta = {
        "stage": stage,
        "config_version": config.version,
        "config": echo,
        "versions": _versions(),
        "standardization": {name: {"mean": s.mean, "std": s.std, "n_obs": s.n_obs}
                            for name, s in zip(artifacts.report.series, stats)},
        "model": {
            "kind": report.model_kind.value,
            "k": report.spec.k, "n_f": report.spec.n_f, "p": report.spec.p,
            "q": report.spec.q, "n_x": report.spec.n_x, "n_w": report.spec.n_w,
            "parameters": count_parameters(report.spec),
            "var_parameters": count_var_parameters(report.spec.k, max(report.spec.p, 1)),
        },
        "fit": {
            "log_likelihood": report.log_likelihood,
            "initial_log_likelihood": report.initial_log_likelihood,
            "converged": report.converged,
            "iterations": report.iterations,
            "gradient_norm": report.gradient_norm,
            "hessian_pd": report.hessian_pd,
            "sign_convention_applied": report.sign_convention_applied,
            "diagnostics": list(report.diagnostics),
        },
        "notes": _notes(report),
        "files": sorted(set(artifacts.files)),
    }
    return meta


def run(config, stage="all"):
    """
    Execute the pipeline up to ``stage`` and write its artifacts.

    :param config (RunConfig): validated configuration.
    :param stage (str): one of :data:`STAGES`.
    :rtype RunArtifacts:
    :raises UnknownStage: ``stage`` is not a pipeline stage.
    """
    if stage not in STAGES:
        raise UnknownStage("unknown stage {!r}; expected one of {}".format(stage, STAGES),
                           module="pipeline")
    depth = STAGES.index(stage) if stage != "all" else len(STAGES) - 1
    do_reduce = stage == "reduce" or (config.reduce and depth >= STAGES.index("reduce"))

    scenarios = []
    if depth >= STAGES.index("scenario") and config.scenarios:
        scenarios = load_scenarios(config.scenarios)

    writer = ArtifactWriter(config.out_dir)
    panel, stats, exog_obs, exog_state = load_inputs(config)
    spec = config.model.spec(panel.k)
    out = RunArtifacts(out_dir=config.out_dir)

    out.report = fit(spec, panel, config.fit, exog_obs=exog_obs, exog_state=exog_state)
    writer.write_csv("estimation.csv", estimation_frame(out.report))
    writer.write_text("estimation.txt", estimation_text(out.report))
    if spec.n_f:
        writer.write_csv("factor_path.csv", factor_path_frame(out.report, config.forecast.level))
        writer.write_csv("contributions.csv", contributions_frame(rank_contributions(out.report)))

    used = panel
    used_stats = stats
    if do_reduce:
        out.selection, out.reduced = reduce(out.report, config.fit.alpha, panel)
        used = panel.select(out.selection.kept)
        used_stats = [stats[panel.names.index(s)] for s in out.selection.kept]
        writer.write_csv("reduction.csv", reduction_frame(out.selection))
        writer.write_csv("estimation_reduced.csv", estimation_frame(out.reduced))
        writer.write_text("estimation_reduced.txt", estimation_text(out.reduced))
        writer.write_csv("factor_path_reduced.csv",
                         factor_path_frame(out.reduced, config.forecast.level))
    report = out.final_report

    if depth >= STAGES.index("risk") and spec.n_f:
        out.risk = risk_summary(report.factor_path, report.index, config.risk)
        payload = {"risk": out.risk.as_dict()}
        if depth >= STAGES.index("forecast"):
            out.forecast = forecast(report, used, config.forecast.horizon, config.forecast.level)
            out.alert = alert(out.forecast, report.factor_path, config.alert,
                              config.risk.orientation)
            payload["alert"] = out.alert.as_dict()
            writer.write_csv("forecast.csv", forecast_frame(out.forecast, used_stats))
        writer.write_json("risk.json", payload)

    if scenarios and spec.n_f:
        out.scenarios = run_scenarios(report, used, scenarios, config.forecast.horizon,
                                      config.forecast.level, config.threads)
        for result in out.scenarios:
            writer.write_csv(scenario_filename(result.scenario.name), scenario_frame(result))

    out.files = list(writer.written)
    writer.write_json("metadata.json", _metadata(config, stage, out, stats))
    out.files = list(writer.written)
    logger.info("[Pipeline] stage %s wrote %d artifacts to %s", stage, len(out.files),
                config.out_dir)
    return out


def _matrix(doc, key, shape):
    if key not in doc or doc[key] is None:
        return None
    arr = np.asarray(doc[key], dtype=float)
    if arr.size != int(np.prod(shape)):
        raise DimensionMismatch("{} has {} entries, spec needs shape {}".format(
            key, arr.size, shape), module="pipeline")
    return arr.reshape(shape)


def params_from_document(doc):
    """
    (DfmSpec, ParamSet) from a simulation parameter document.

    Keys: ``spec`` (k, n_f, n_x, n_w, p, q), blocks ``P``, ``Q``, ``R``, ``A`` (list),
    ``C`` (list) and ``sigma_eps``; omitted blocks are zero, omitted variances one.
    """
    spec = DfmSpec(**(doc.get("spec") or {}))
    k, n_f = spec.k, spec.n_f
    A = doc.get("A")
    C = doc.get("C")
    params = ParamSet.create(
        spec,
        P=_matrix(doc, "P", (k, n_f)),
        Q=_matrix(doc, "Q", (k, spec.n_x)),
        R=_matrix(doc, "R", (n_f, spec.n_w)),
        A=None if A is None else [_matrix({"A": a}, "A", (n_f, n_f)) for a in A],
        C=None if C is None else [_matrix({"C": c}, "C", (k, k)) for c in C],
        sigma_eps=_matrix(doc, "sigma_eps", (k,)),
    )
    return spec, params


def simulate_cmd(params_path, periods, seed, out_dir):
    """
    Simulate a panel from a parameter file and write ``panel.csv``, ``factors.csv`` and
    ``manifest.json`` (SHA-256 of both files with the seed and period count).

    :rtype list: written file paths.
    :raises DimensionMismatch: parameter blocks do not fit the ``spec`` dimensions.
    :raises InvalidHorizon: periods < 1.
    """
    doc = load_params(params_path)
    spec, params = params_from_document(doc)
    form = build(spec, params, doc.get("exog_obs"), doc.get("exog_state"))
    names = tuple(doc.get("names") or ["y{}".format(i + 1) for i in range(spec.k)])
    freq = Frequency.parse(doc.get("frequency", "annual"))
    start = str(doc.get("start", {"annual": "2000", "quarterly": "2000-Q1",
                                  "monthly": "2000-01"}[freq.value]))
    index = TimeIndex(start, freq, max(int(periods), 1))
    panel, factors = simulate(form, periods, seed, index=index, names=names,
                              noise_scale=float(doc.get("noise_scale", 1.0)))
    writer = ArtifactWriter(out_dir)
    frame = panel.to_frame().reset_index()
    paths = [writer.write_text("panel.csv", frame_to_csv(frame))]
    fac = {"period": index.labels()}
    for j in range(factors.shape[1]):
        fac["f{}".format(j + 1)] = factors[:, j]
    paths.append(writer.write_csv("factors.csv", pd.DataFrame(fac)))
    manifest = {
        "params": os.path.basename(params_path),
        "periods": int(periods),
        "seed": int(seed),
        "sha256": {os.path.basename(p): file_sha256(p) for p in paths},
    }
    paths.append(writer.write_json("manifest.json", manifest))
    logger.info("[Pipeline] simulated %d periods of %s (seed %d)", int(periods),
                classify(spec).value, int(seed))
    return paths
