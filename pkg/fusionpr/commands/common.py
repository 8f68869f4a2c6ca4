"""
Common helpers shared by the subcommand modules.
"""
import argparse
import sys
from contextlib import contextmanager
from datetime import date
from pathlib import Path
from typing import List

from fusionpr import config
from fusionpr.errors import ArgumentError, ConfigurationError, UsageError
from fusionpr.serialization import dumps_json

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


class CliArgumentParser(argparse.ArgumentParser):
    """Parser whose failures raise UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


class HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    pass


def shared_options() -> argparse.ArgumentParser:
    """Flags every subcommand accepts."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--threads", type=int, default=None,
                        help=f"worker cap (falls back to ${config.THREADS_ENV_VAR}, then 1)")
    parent.add_argument("--log-level", choices=LOG_LEVELS, default=config.LOG_LEVEL,
                        help="log verbosity on stderr")
    return parent


def add_command(subparsers, name: str, help_text: str, parents) -> argparse.ArgumentParser:
    return subparsers.add_parser(name, help=help_text, description=help_text,
                                 parents=parents, formatter_class=HelpFormatter)


def iso_date(value: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO-8601 date: {value!r}")


def parse_ks(text: str) -> List[int]:
    """'1,5,10,20' -> [1, 5, 10, 20]."""
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"--topk expects comma-separated integers, got {text!r}")
    if not ks or any(k < 1 for k in ks) or ks != sorted(set(ks)):
        raise UsageError(f"--topk values must be distinct, positive and ascending, got {text!r}")
    return ks


def require_path(path, flag: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{flag}: no such file or directory: {path}")
    return path


def get_threads(args) -> int:
    try:
        return config.resolve_threads(args.threads)
    except ConfigurationError as e:
        raise UsageError(str(e))


@contextmanager
def usage_errors():
    """Parameter-constraint violations become usage errors."""
    try:
        yield
    except (ArgumentError, ConfigurationError) as e:
        raise UsageError(str(e))


def emit(value) -> None:
    """Write a JSON document to stdout."""
    sys.stdout.write(dumps_json(value))
    sys.stdout.flush()
