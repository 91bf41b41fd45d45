#!/usr/bin/env python3
"""
FedSurg Simulator - Command-Line Application
Parses arguments, dispatches subcommands and maps failures to exit codes
"""

import argparse
import logging
import sys

from fedsurg import __version__
from fedsurg.commands.gen_data import GenDataCommand
from fedsurg.commands.metrics import MetricsCommand
from fedsurg.commands.rank import RankCommand
from fedsurg.commands.simulate import SimulateCommand
from fedsurg.errors import ValidationError
from fedsurg.utils.config_loader import load_experiment_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

# argparse attribute -> dotted config key
OVERRIDE_KEYS = {
    "seed": "seed",
    "out": "output.dir",
    "data": "data.path",
    "workers": "federated.workers",
    "holdout_center": "federated.holdout_center",
    "bootstrap_iters": "evaluation.bootstrap_iters",
    "wilcoxon_mode": "evaluation.wilcoxon_mode",
    "f1_absent_convention": "evaluation.f1_absent_convention",
    "task2_resampling": "evaluation.task2_resampling",
    "xlsx": "output.xlsx",
}


class _Parser(argparse.ArgumentParser):
    """Usage errors become ValidationError (exit 1) instead of exiting with 2"""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


class FedSurgApp:
    """Main application class"""

    def __init__(self, stdout=None):
        self.stdout = stdout
        self.commands = [GenDataCommand(self), SimulateCommand(self), RankCommand(self), MetricsCommand(self)]
        self.parser = self._build_parser()

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = _Parser(prog="fedsurg", description="Federated surgical-video challenge simulator")
        parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
        subparsers.required = True
        for command in self.commands:
            sub = subparsers.add_parser(command.name, help=command.help, description=command.help)
            command.add_arguments(sub)
            sub.set_defaults(handler=command)
        return parser

    def add_common_arguments(self, parser) -> None:
        parser.add_argument("--config", help="experiment config JSON (default: FEDSURG_CONFIG or built-in settings)")
        parser.add_argument("--seed", type=int, help="master seed")
        parser.add_argument("--out", help="output directory")
        parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging level")

    def load_config(self, args):
        overrides = {key: getattr(args, attr) for attr, key in OVERRIDE_KEYS.items() if hasattr(args, attr)}
        if getattr(args, "pipelines", None):
            overrides["pipelines"] = [p.strip() for p in args.pipelines.split(",") if p.strip()]
        return load_experiment_config(args.config, overrides)

    def emit(self, text: str) -> None:
        print(text, file=self.stdout or sys.stdout)

    def run(self, argv=None) -> int:
        """
        Execute one command

        Returns:
            0 on success, 1 on validation/usage errors, 2 on any other failure
        """
        try:
            args = self.parser.parse_args(argv)
        except ValidationError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_VALIDATION
        except SystemExit as e:
            # --help / --version
            return int(e.code or 0)

        if args.log_level:
            logging.getLogger().setLevel(args.log_level)

        try:
            logger.info(f"Running {args.command}")
            args.handler.run(args)
            return EXIT_OK
        except ValidationError as e:
            logger.error(f"{args.command} failed: {e}", exc_info=True)
            print(f"error: {e}", file=sys.stderr)
            return EXIT_VALIDATION
        except Exception as e:
            logger.error(f"{args.command} failed: {e}", exc_info=True)
            print(f"error: {e}", file=sys.stderr)
            return EXIT_RUNTIME
