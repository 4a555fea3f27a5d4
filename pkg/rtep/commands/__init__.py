"""CLI subcommands for rtep"""

from .solve import cmd_solve_det, cmd_solve_robust
from .verify import cmd_verify
from .dualgap import cmd_dualgap
from .sweep import cmd_sweep

COMMANDS = {
    "solve-det": cmd_solve_det,
    "solve-robust": cmd_solve_robust,
    "verify": cmd_verify,
    "dualgap": cmd_dualgap,
    "sweep": cmd_sweep,
}

__all__ = [
    "COMMANDS",
    "cmd_solve_det",
    "cmd_solve_robust",
    "cmd_verify",
    "cmd_dualgap",
    "cmd_sweep"
]
