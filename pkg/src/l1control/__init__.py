"""Second-order conditions for L1-minimal bang-bang control in the two-body problem."""
from .errors import (
    DomainError,
    Inconclusive,
    L1ControlError,
    NoConvergence,
    PropagationError,
    RegularityViolation,
    SingularContact,
    StallAtLambda,
)
from .flow import ArcKind, Extremal, FlowSettings, propagate_bang_bang, propagate_regularized, propagate_singular
from .hamiltonians import ExtremalPoint, bracket, control_law, h0, h01, h1, poisson_bracket
from .jacobi import Certificate, ConjugatePoint, Location, check_A2, conjugate_scan, jump_matrix, propagate_jacobi
from .potential import PhaseState, PotentialModel
from .shooting import SolverSettings, TransferProblem, UnitScales, continuation, newton_solve
from .singular import classify, locus_seek

__version__ = "0.1.0"
