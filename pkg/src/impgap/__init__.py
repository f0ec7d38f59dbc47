"""Numerical tools for impulsive optimal control and infimum gaps.

Problems with unbounded, cone-constrained control derivatives are solved in
their space-time (graph completion) extension and compared with strict
processes whose time component never stalls.  The package evaluates the
extended maximum principle along candidate processes, classifies them as
normal or abnormal extremals and probes for infimum gaps.
"""

__version__ = "0.1.0"

from .model import ControlCone, CostSpec, ProblemSpec, TargetSpec, VectorFieldSet, validate
from .problemfile import ProblemFileError, load_problem, loads_problem
from .processes import ExtendedProcess, StrictProcess
from .reparam import arc_normalize, d_infty, embed, invert_embedding, no_drift_strictify
from .solver import (Candidate, SolveConfig, brute_force_oracle, minimize_violation,
                     solve_extended, solve_strict_restricted)
from .pmp import (MultiplierSet, classify_normality, extremal_residuals, hamiltonian_max,
                  load_multipliers)
from .analysis import (certify_no_gap, drift_controllability, gap_probe, isolation_probe,
                       quick_1_controllability)
from .corpus import load_example, load_example_minimizer

__all__ = [
    "ControlCone", "CostSpec", "ProblemSpec", "TargetSpec", "VectorFieldSet", "validate",
    "ProblemFileError", "load_problem", "loads_problem", "ExtendedProcess", "StrictProcess",
    "arc_normalize", "d_infty", "embed", "invert_embedding", "no_drift_strictify", "Candidate",
    "SolveConfig", "brute_force_oracle", "minimize_violation", "solve_extended",
    "solve_strict_restricted", "MultiplierSet", "classify_normality", "extremal_residuals",
    "hamiltonian_max", "load_multipliers", "certify_no_gap", "drift_controllability",
    "gap_probe", "isolation_probe", "quick_1_controllability", "load_example",
    "load_example_minimizer",
]
