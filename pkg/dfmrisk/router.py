"""
dfmrisk.router
~~~~~~~~~~~~~~

This module provides the :class:`DfmApp <DfmApp>` command router: handlers are
registered with a decorator and dispatched from ``argparse`` sub-commands.

Usage::

  >>> app = DfmApp()
  >>> @app.command("estimate", help="fit the model")
  >>> def estimate(args):
  >>>     return 0
  >>> app.run(["estimate", "--config", "run.yaml"])
"""

import argparse
import logging

from .exceptions import EXIT_NUMERICAL, EXIT_OK, DfmError, describe, exit_code_for

logger = logging.getLogger(__name__)


class DfmApp:
    """A decorator-based router from sub-command names to handler functions.

    Each handler receives the parsed ``argparse.Namespace`` and returns an exit
    status (``None`` counts as success). Package errors are reported through the
    logger with their provenance and mapped to their exit codes.

    :attrs commands (dict): name -> (handler, help text, argument specs).
    """

    def __init__(self, prog="dfm", description=None):
        self.prog = prog
        self.description = description
        self.commands = {}

    def command(self, name, help=None, arguments=()):
        """
        Decorator registering ``func`` as the handler of sub-command ``name``.

        :param arguments (sequence): ``(flags, kwargs)`` pairs passed to ``add_argument``.
        """
        def decorator(func):
            self.commands[name] = (func, help, tuple(arguments))
            func._command_name = name
            return func
        return decorator

    def build_parser(self):
        parser = argparse.ArgumentParser(prog=self.prog, description=self.description)
        parser.add_argument("--log-level", default="INFO",
                            choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        sub = parser.add_subparsers(dest="command", metavar="command")
        sub.required = True
        for name, (_, help_text, arguments) in self.commands.items():
            cmd = sub.add_parser(name, help=help_text)
            for flags, kwargs in arguments:
                cmd.add_argument(*flags, **kwargs)
        return parser

    def dispatch(self, args):
        handler = self.commands[args.command][0]
        try:
            status = handler(args)
        except DfmError as e:
            logger.error("%s", describe(e))
            return exit_code_for(e)
        except Exception:
            logger.exception("[Router] unexpected failure in %s", args.command)
            return EXIT_NUMERICAL
        return EXIT_OK if status is None else int(status)

    def run(self, argv=None):
        """Parse ``argv`` and run the selected handler; returns the exit status."""
        args = self.build_parser().parse_args(argv)
        logging.getLogger().setLevel(getattr(logging, args.log_level))
        return self.dispatch(args)
