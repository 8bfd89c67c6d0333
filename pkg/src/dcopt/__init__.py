"""Solver and benchmark toolkit for constrained difference-of-convex programs.

Solves ``min f(x) + phi(x) - psi(x)  s.t.  g(x) <= 0`` from a feasible start
by minimizing, at each iterate, a strongly convex model over an intersection
of balls that inner-approximates the feasible set. Subproblems are solved
through their duals by a line-search proximal gradient method and accepted
under an inexactness certificate, so every outer step is feasible and
monotone. Includes instance generators, a DC-linearization baseline, grid
oracles for verification, and a command line interface (``dcopt``).
"""

from .baselines import DcaConfig, OracleResult, brute_force_min, dca_run, kkt_verify
from .dual import DualPoint, DualReport, PGlsConfig, solve_dual
from .instances import (
    QCQPInstance,
    StudentTInstance,
    gen_qcqp,
    gen_student_t,
    instance_checksum,
    load_instance,
    save_instance,
)
from .problem import (
    ConcaveCorrOracle,
    ConstraintOracle,
    ConvexOracle,
    ProblemSpec,
    SmoothOracle,
    check_feasible,
    eval_F,
    l1_oracle,
    l2_corr_oracle,
    zero_convex_oracle,
)
from .solver import InfeasibleStartError, SolveReport, SolverConfig, kkt_measure, solve
from .surrogate import Certificate, CurvatureOp, ModelParams, build_model

__version__ = "0.1.0"

__all__ = [
    "ProblemSpec",
    "SmoothOracle",
    "ConvexOracle",
    "ConcaveCorrOracle",
    "ConstraintOracle",
    "eval_F",
    "check_feasible",
    "l1_oracle",
    "zero_convex_oracle",
    "l2_corr_oracle",
    "CurvatureOp",
    "ModelParams",
    "Certificate",
    "build_model",
    "DualPoint",
    "DualReport",
    "PGlsConfig",
    "solve_dual",
    "SolverConfig",
    "SolveReport",
    "InfeasibleStartError",
    "solve",
    "kkt_measure",
    "DcaConfig",
    "dca_run",
    "OracleResult",
    "brute_force_min",
    "kkt_verify",
    "QCQPInstance",
    "StudentTInstance",
    "gen_qcqp",
    "gen_student_t",
    "save_instance",
    "load_instance",
    "instance_checksum",
    "__version__",
]
