"""Optimal drift control of a reflected queue.

Computes the optimal long-run average cost and the nested queue-length
thresholds of the cheapest-first promotion policy for a reflected diffusion
whose drift is assembled from costed activities, verifies the solution by
independent numerical integration, benchmarks it against static policies,
and validates everything by Monte Carlo simulation.
"""

from . import errors
from .bellman_ode import (
    Classification,
    OdeSolution,
    classify_beta,
    find_beta_star_ode,
    integrate_v,
    ivp_rhs,
)
from .closedform import (
    SolveResult,
    ValueFunction,
    bellman_residual,
    build_value_function,
    f_eval,
    find_beta_star,
    policy_eval,
    v_eval,
)
from .errors import (
    BlowUpError,
    BracketError,
    ConfigError,
    DomainError,
    DriftqError,
    InconclusiveError,
    SolverError,
    UnboundedError,
    ValidationError,
)
from .model import (
    ConjugatePair,
    ProblemInstance,
    band_count,
    beta_lower,
    build_instance,
    conjugate_pair,
    cost_c,
    delta_cost,
    lipschitz_bound,
    never_promote_cost,
    phi,
    psi,
    theta_to_delta,
)
from .policies import (
    DynamicPolicy,
    RandomizedStaticPolicy,
    StaticPolicy,
    best_static,
    best_static_ladder,
    randomized_static_cost,
    static_cost,
)
from .simulate import (
    SimConfig,
    SimulationReport,
    simulate_policy,
    stationary_reference,
)

__version__ = "0.1.0"
