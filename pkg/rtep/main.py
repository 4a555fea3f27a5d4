"""Command-line entry point"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from rtep import __version__
from rtep.commands import COMMANDS
from rtep.core.config import RunConfig, settings
from rtep.core.exceptions import ConfigError, RtepException
from rtep.core.log import configure_logging

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per operation and the shared run flags"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", required=True, help="Case file (TOML) or bundled case name")
    common.add_argument("--ud", dest="u_d", type=float, help="Load uncertainty [%%]")
    common.add_argument("--ur", dest="u_r", type=float, help="RES uncertainty [%%]")
    common.add_argument("--samples", type=int, help="MCS sample count")
    common.add_argument("--seed", type=int, help="MCS seed")
    common.add_argument("--strict", action="store_true", default=None, help="Strict (zero-curtailment) MCS mode")
    common.add_argument("--init-topology", choices=["all", "deterministic"], help="Initial Benders topology")
    common.add_argument("--dual-slave", choices=["nlp", "vertex"], help="Worst-case search: dual slave NLP or box vertices")
    common.add_argument("--max-iters", type=int, help="Benders iteration cap")
    common.add_argument("--tolerance", type=float, help="Benders relative gap tolerance")
    common.add_argument("--plan", help="Plan file (verify, dualgap --topology plan)")
    common.add_argument("--topology", choices=["base", "plan", "all"], help="dualgap topology")
    common.add_argument("--optimality-gap", action="store_true", default=None,
                        help="dualgap: also compare the non-convex model with the relaxation")
    common.add_argument("--ud-values", type=float, nargs="+", help="sweep: u_d grid [%%]")
    common.add_argument("--ur-values", type=float, nargs="+", help="sweep: u_r grid at fixed --ud [%%]")
    common.add_argument("--workers", type=int, help="Worker processes for MCS and sweep")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--log-level", default=None, help="Logging level (default: RTEP_LOG)")

    parser = argparse.ArgumentParser(prog=settings.app_name, description=settings.app_description)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve-det", parents=[common], help="Deterministic AC TEP")
    sub.add_parser("solve-robust", parents=[common], help="Robust AC TEP by Benders decomposition")
    sub.add_parser("verify", parents=[common], help="Monte-Carlo robustness check of a plan")
    sub.add_parser("dualgap", parents=[common], help="Primal/dual slave gap at fixed topologies")
    sub.add_parser("sweep", parents=[common], help="Robust cost over a grid of uncertainty levels")
    return parser


def make_config(args: argparse.Namespace) -> RunConfig:
    """Layer the given flags over the RunConfig defaults

    Raises:
        ConfigError: If a value fails validation
    """
    values = {k: v for k, v in vars(args).items() if v is not None and k != "log_level"}
    try:
        return RunConfig(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(loc) for loc in error['loc']) or 'config'}: {error['msg']}" for error in e.errors()
        )
        raise ConfigError(problems)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = make_config(args)
        logger.info(f"{config.command} on {config.case}")
        return COMMANDS[config.command](config)
    except RtepException as e:
        logger.error(e.detail)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
