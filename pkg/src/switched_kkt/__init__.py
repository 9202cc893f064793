"""Constrained optimisation by integrating a switched gradient-flow system.

Each active set of inequalities selects a smooth vector field that drives the
active constraints to zero at rate ``kappa1`` while descending ``f`` along
their tangent space at rate ``kappa2``. A switching law adds constraints as
they are reached and releases them, no faster than a dwell time allows,
once the unconstrained flow would move back inside.
"""
__version__ = "0.1.0"

from .activeset import ActiveSet, active_indices
from .backend import BACKEND
from .certify import (
    AssumptionReport,
    KKTReport,
    Sampler,
    certify_point,
    check_assumption1,
    iss_bound,
    kkt_residual,
    recover_multipliers,
    second_order_check,
)
from .dynamics import GainConfig, subsystem_field
from .errors import *  # noqa: F401,F403
from .integrate import SolverConfig, Trajectory, solve
from .problem import (
    HvacParams,
    Problem,
    QpData,
    builtin_problem,
    hvac_problem,
    qp_paper_problem,
    qp_transform,
    rosenbrock_problem,
)
