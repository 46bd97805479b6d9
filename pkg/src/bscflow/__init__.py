"""Minimizing-movement solver and verification harness for parabolic
variational problems with time-dependent convex integrands."""
from .geometry import ConvexDomain, Mesh, triangulate, validate_convex
from .bsc import BoundaryTrace, AffineSupportPair, BscReport, verify_bsc, extend_supports
from .integrand import (TimeDependentIntegrand, SteklovIntegrand, DominatingBound,
                        make_builtin, from_descriptor, steklov, steklov_convergence_gap,
                        dominating_bound)
from .scheme import (SolverOptions, SchemeConfig, InitialDatum, DiscreteSolution,
                     minimize_step, run_scheme, energy_report, refine_study)

__version__ = "0.1.0"
