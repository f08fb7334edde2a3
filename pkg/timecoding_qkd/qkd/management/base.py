"""
Common plumbing of the qkd management commands.
"""

import logging

from django.conf import settings
from django.core.management.base import BaseCommand
from django.core.management.base import CommandError

from timecoding_qkd.qkd.config import RunConfig
from timecoding_qkd.qkd.exceptions import QKDError
from timecoding_qkd.qkd.services import RunContext
from timecoding_qkd.qkd.services import build_context
from timecoding_qkd.qkd.utils.parallel import MAX_SEED

logger = logging.getLogger(__name__)

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG, 3: logging.DEBUG}


class QKDCommand(BaseCommand):
    """
    Base for commands that run part of the experiment.

    Subclasses implement ``run(context, **options)``. Every QKDError is logged
    and re-raised as CommandError so the process exits nonzero.
    """

    def add_arguments(self, parser):
        parser.add_argument(
            "--config",
            help="Run configuration file (dotted keys or JSON)",
        )
        parser.add_argument(
            "--seed",
            type=int,
            help="Master seed, an unsigned 64-bit integer",
        )
        parser.add_argument(
            "--jobs",
            type=int,
            help="Worker processes (default QKD_DEFAULT_JOBS)",
        )
        parser.add_argument(
            "--out",
            help="Artifact directory (default outputs.directory, then QKD_OUTPUT_DIR)",
        )
        parser.add_argument(
            "--format",
            choices=("csv", "json"),
            help="Format of tabular artifacts",
        )

    def load_config(self, path: str | None) -> RunConfig:
        config = RunConfig.load(path) if path else RunConfig.defaults()
        return config.with_env(prefix=getattr(settings, "QKD_ENV_PREFIX", "QKD__"))

    def handle(self, *args, **options):
        level = VERBOSITY_LEVELS.get(options.get("verbosity", 1), logging.INFO)
        logging.getLogger("timecoding_qkd").setLevel(level)

        seed = options.get("seed")
        if seed is not None and not 0 <= seed <= MAX_SEED:
            raise CommandError(f"--seed must be an unsigned 64-bit integer (got {seed})")
        jobs = options.get("jobs")
        if jobs is not None and jobs < 1:
            raise CommandError(f"--jobs must be at least 1 (got {jobs})")

        try:
            config = self.load_config(options.get("config"))
            context = build_context(config, seed=seed, jobs=jobs, out=options.get("out"), fmt=options.get("format"))
            paths = self.run(context, **options)
        except QKDError as e:
            logger.error(f"{self.command_name}: {e.message}")
            raise CommandError(e.message) from e

        for path in paths or []:
            self.stdout.write(f"  {path}")
        self.stdout.write(self.style.SUCCESS(f"{self.command_name} finished, artifacts in {context.store.directory}"))

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def run(self, context: RunContext, **options):
        raise NotImplementedError
