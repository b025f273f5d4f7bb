"""Average symbol-error probability and relay power allocation for
two-hop decode-and-forward networks over Rayleigh fading."""

from .allocator import (AllocationResult, ConvergenceError, Constraints, InfeasibleError,
                        SolverConfig, allocate_approx, allocate_equal, allocate_exact,
                        check_feasibility)
from .model import (REFERENCE_POSITIONS, ChannelStats, Geometry, NetworkConfig, derive_stats,
                    make_stats)
from .montecarlo import TrialPlan, estimate_sep
from .sep import SepEstimate, sep_closed_form, sep_gradient, sep_hessian, sep_quadrature

__version__ = "0.1.0"

__all__ = [
    "AllocationResult", "ConvergenceError", "Constraints", "InfeasibleError", "SolverConfig",
    "allocate_approx", "allocate_equal", "allocate_exact", "check_feasibility",
    "REFERENCE_POSITIONS", "ChannelStats", "Geometry", "NetworkConfig", "derive_stats",
    "make_stats", "TrialPlan", "estimate_sep", "SepEstimate", "sep_closed_form", "sep_gradient",
    "sep_hessian", "sep_quadrature",
]
