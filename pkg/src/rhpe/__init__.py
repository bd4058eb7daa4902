"""Regularized hybrid proximal extragradient solvers for monotone inclusions.

The main entry points are :func:`dr_hpe_solve` (no distance knowledge
needed), :func:`static_solve` (fixed regularization) and
:func:`unregularized_hpe_solve` (the plain HPE baseline).
"""
from .exceptions import *  # noqa: F401,F403
from .hpe_core import HpeCertificate, Trace, gamma_sequence, pointwise_rate_bounds, theta, verify_hpe_condition
from .inner_solvers import InnerEngine, korpelevich_step, make_engine, tseng_step
from .kernels import BACKEND
from .operators import (
    ClosedConvexSet,
    LipschitzMap,
    ResolventMap,
    affine_map,
    box_normal_cone,
    box_set,
    l1_subdifferential,
    shifted_resolvent,
    soft_threshold,
    whole_space,
    zero_operator,
)
from .problems import (
    Constraint,
    ProblemInstance,
    affine_problem,
    dump_problem,
    load_problem,
    make_affine_box_vi,
    make_l1_regularized,
    make_skew_rotation,
    make_skew_spectrum,
    verify_solution,
)
from .regularized import (
    RegularizationState,
    SolveReport,
    SolverConfig,
    Termination,
    d0_bar,
    d_mu_gap_check,
    dr_hpe_solve,
    mu_of,
    static_iteration_bound,
    static_solve,
    unregularized_hpe_solve,
)

__version__ = "0.1.0"
