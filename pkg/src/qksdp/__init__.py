"""Low-rank feasible-method solver for quadratic knapsack SDP relaxations."""

from .certify import KktCertificate, kkt_residues, recover_dual_regular
from .errors import QksdpError
from .escape import EscapeOutcome, EscapeProblem, escape_step, solve_escape_sdp
from .geometry import FactorPoint, random_feasible_point, retract_to_variety
from .instance import (
    GeneratorSpec,
    QkpInstance,
    generate,
    read_instance,
    scale,
    validate,
    write_instance,
)
from .rounding import RoundedSolution, relgap, round_solution
from .solver import SolverConfig, SolveReport, select_rank, solve_pipeline, solve_sqkelr

__version__ = "0.1.0"

__all__ = [
    "EscapeOutcome",
    "EscapeProblem",
    "FactorPoint",
    "GeneratorSpec",
    "KktCertificate",
    "QkpInstance",
    "QksdpError",
    "RoundedSolution",
    "SolveReport",
    "SolverConfig",
    "escape_step",
    "generate",
    "kkt_residues",
    "random_feasible_point",
    "read_instance",
    "recover_dual_regular",
    "relgap",
    "retract_to_variety",
    "round_solution",
    "scale",
    "select_rank",
    "solve_escape_sdp",
    "solve_pipeline",
    "solve_sqkelr",
    "validate",
    "write_instance",
    "__version__",
]
