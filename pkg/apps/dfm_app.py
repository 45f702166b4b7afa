"""
apps.dfm_app
~~~~~~~~~~~~

Command handlers of the ``dfm`` CLI, registered on a :class:`DfmApp` router.

Commands:
---------
- ``estimate``, ``reduce``, ``risk``, ``forecast``, ``scenario``: run the pipeline
  up to that stage from a YAML config;
- ``run``: the whole pipeline (reduction only when ``fit.reduce`` is set);
- ``simulate``: write a simulated panel and its factor path from a parameter file.
"""

import logging

from dfmrisk import pipeline
from dfmrisk.config import load_config
from dfmrisk.router import DfmApp

logger = logging.getLogger(__name__)

app = DfmApp(prog="dfm", description="Dynamic factor model risk toolkit")

RUN_ARGUMENTS = (
    (("--config",), {"required": True, "help": "YAML run configuration"}),
    (("--out",), {"default": None, "help": "output directory (overrides output.dir)"}),
    (("--seed",), {"type": int, "default": None, "help": "random seed"}),
    (("--alpha",), {"type": float, "default": None, "help": "significance level for reduction"}),
    (("--horizon",), {"type": int, "default": None, "help": "forecast horizon"}),
    (("--threads",), {"type": int, "default": None, "help": "worker threads for scenarios"}),
)


def _run_stage(args, stage):
    cfg = load_config(args.config, overrides={
        "out": args.out, "seed": args.seed, "alpha": args.alpha,
        "horizon": args.horizon, "threads": args.threads,
    })
    logger.info("[DfmApp] %s: config %s -> %s", stage, args.config, cfg.out_dir)
    result = pipeline.run(cfg, stage)
    for name in result.files:
        logger.info("[DfmApp] wrote %s", name)


@app.command("estimate", help="fit the model and write the estimation table",
             arguments=RUN_ARGUMENTS)
def estimate(args):
    _run_stage(args, "estimate")


@app.command("reduce", help="fit, then refit on significant series", arguments=RUN_ARGUMENTS)
def reduce(args):
    _run_stage(args, "reduce")


@app.command("risk", help="fit and compute the risk measures", arguments=RUN_ARGUMENTS)
def risk(args):
    _run_stage(args, "risk")


@app.command("forecast", help="fit, risk measures and forecasts", arguments=RUN_ARGUMENTS)
def forecast(args):
    _run_stage(args, "forecast")


@app.command("scenario", help="full pipeline including scenarios", arguments=RUN_ARGUMENTS)
def scenario(args):
    _run_stage(args, "scenario")


@app.command("run", help="full pipeline as configured", arguments=RUN_ARGUMENTS)
def run_all(args):
    _run_stage(args, "all")


@app.command("simulate", help="simulate a panel from a parameter file", arguments=(
    (("--params",), {"required": True, "help": "YAML parameter file"}),
    (("--periods",), {"type": int, "required": True, "help": "number of periods T"}),
    (("--seed",), {"type": int, "default": 0, "help": "random seed"}),
    (("--out",), {"default": "out", "help": "output directory"}),
))
def simulate(args):
    pipeline.simulate_cmd(args.params, args.periods, args.seed, args.out)
