"""Multistage stochastic convex solver with certified inexact cuts.

Subproblems on a finite scenario tree are solved to certified accuracy
(exactly, by early-stopped simplex, or with deliberately injected errors)
and the resulting primal-dual certificates drive valid cuts whose
intercepts carry the error budget.  Brute-force tree oracles back every
approximation, and the `isddp` console script wraps the whole pipeline.
"""

from .compare import (ComparisonReport, SmoothInstance, compare_bounds,
                      sample_instance)
from .cuts import (Cut, CutPool, cut_affine_constraints,
                   cut_fenchel_constrained, cut_fenchel_unconstrained,
                   cut_general)
from .errors import (BoundViolation, Infeasible, InstanceError, IsddpError,
                     MaxPivots, NegativeMultiplier, NoInteriorPoint,
                     NumericalTrouble, SlaterCheckFailed, SolverFailure,
                     TooLarge, Unbounded)
from .isddp import (ErrorSchedule, IterationRecord, SolverState,
                    backward_pass, forward_pass, initialize,
                    plateau_reached, run)
from .model import (Box, MultistageProblem, PolyhedralFunction, Realization,
                    StageModel, fenchel_view, parse_instance)
from .oracle import (build_tree, extensive_form, subtree_value, tree_size,
                     true_Q_grid)
from .subsolve import (Certificate, FenchelCertificate, SubproblemInstance,
                       solve_exact, solve_fenchel_saddle, solve_inexact)

__version__ = "0.1.0"

__all__ = [
    "Box", "BoundViolation", "Certificate", "ComparisonReport", "Cut",
    "CutPool", "ErrorSchedule", "FenchelCertificate", "Infeasible",
    "InstanceError", "IsddpError", "IterationRecord", "MaxPivots",
    "MultistageProblem", "NegativeMultiplier", "NoInteriorPoint",
    "NumericalTrouble", "PolyhedralFunction", "Realization",
    "SlaterCheckFailed", "SmoothInstance", "SolverFailure", "SolverState",
    "StageModel", "SubproblemInstance", "TooLarge", "Unbounded",
    "backward_pass", "build_tree", "compare_bounds",
    "cut_affine_constraints", "cut_fenchel_constrained",
    "cut_fenchel_unconstrained", "cut_general", "extensive_form",
    "fenchel_view", "forward_pass", "initialize", "parse_instance",
    "plateau_reached", "run", "sample_instance", "solve_exact",
    "solve_fenchel_saddle", "solve_inexact", "subtree_value",
    "tree_size", "true_Q_grid",
]
