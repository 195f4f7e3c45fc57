"""Steepest descent on orthogonal Stiefel manifolds."""
from .costs import (
    BrockettProblem,
    HetQuadProblem,
    PenroseProblem,
    ProcrustesProblem,
    brockett_enumerate_critical,
    brockett_invariant_subspace_check,
)
from .descent import DescentConfig, DescentTrace, descent_step, run_descent
from .gradient import CostModel, criticality_report, embedded_gradient
from .manifold import cayley, check_stiefel, random_stiefel, retract, select_full_rank_rows

__version__ = "0.1.0"
