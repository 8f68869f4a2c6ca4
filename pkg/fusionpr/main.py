"""
Command-line application entry point.
fusionpr - multi-modal place recognition toolkit
"""
import json
import sys
from typing import List, Optional

from fusionpr import __version__, config
from fusionpr.commands import (
    describe_commands,
    evaluate_commands,
    loss_commands,
    render_commands,
    split_commands,
    synth_commands,
)
from fusionpr.commands.common import CliArgumentParser, HelpFormatter, shared_options
from fusionpr.errors import FprError, UsageError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# Registered in pipeline order
COMMAND_MODULES = [
    synth_commands,
    split_commands,
    render_commands,
    describe_commands,
    evaluate_commands,
    loss_commands,
]


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(
        prog="fusionpr",
        description="LiDAR-camera place recognition: synthetic data, benchmark splits, descriptors, recall and losses",
        formatter_class=HelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    parents = [shared_options()]
    for module in COMMAND_MODULES:
        module.register(subparsers, parents)
    return parser


def error_line(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        error_line(e.kind, str(e))
        return EXIT_USAGE
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else EXIT_OK

    config.configure_logging(args.log_level)
    try:
        return args.handler(args)
    except UsageError as e:
        error_line(e.kind, str(e))
        return EXIT_USAGE
    except FprError as e:
        error_line(e.kind, str(e))
        return EXIT_FAILURE
    except OSError as e:
        error_line("io", f"{e.strerror or e}: {e.filename}" if e.filename else str(e))
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
