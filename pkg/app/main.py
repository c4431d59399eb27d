import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from . import config
from .api.commands import COMMANDS
from .errors import GibbsError
from utility import preprocess
from utility.presets import PRESETS, get_preset

logger = logging.getLogger(__name__)

DESCRIPTION = """
Gibbs geometry engine: transfer operators, KL calculus, Haar bases and
geodesics on the space of Gibbs measures of the full shift.

Every run writes report.json (and CSV artifacts) to --out. Exit codes:
0 success, 2 configuration error, 3 numerical failure.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gibbs-geometry",
        description=DESCRIPTION,
        epilog="presets: " + ", ".join(PRESETS),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="JSON job configuration")
    source.add_argument(
        "--preset", choices=list(PRESETS), help="Named job configuration"
    )
    parser.add_argument(
        "--out", type=Path, default=Path("out"), help="Output directory"
    )
    parser.add_argument(
        "--depth", type=int, help="Working depth of the divergence command"
    )
    parser.add_argument("--seed", type=int, help="Seed recorded for randomized checks")
    parser.add_argument(
        "--log-level",
        default=config.LOG_LEVEL,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
        help="Root log level",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    """
    Run one job and map its outcome to an exit code.

    Args:
        argv (list[str] | None): Arguments without the program name

    Returns:
        int: 0 on success, 2 on configuration errors, 3 on numerical failures
    """
    args = build_parser().parse_args(argv)
    config.configure_logging(args.log_level)
    try:
        if args.preset:
            raw = get_preset(args.preset)
        else:
            raw = preprocess.load_config(args.config)
        raw = preprocess.apply_overrides(raw, args.depth, args.seed)
        job = preprocess.validate(raw)
        args.out.mkdir(parents=True, exist_ok=True)
        logger.info("running %s into %s", job.command, args.out)
        COMMANDS[job.command](job, args.out)
    except ValidationError as e:
        logger.error("invalid configuration: %s", e)
        return 2
    except GibbsError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    logger.info("%s finished", job.command)
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
