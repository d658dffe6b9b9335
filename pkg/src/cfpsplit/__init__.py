"""Distributed solvers for loosely coupled convex feasibility problems.

Split a feasibility problem over many agents that each own a few variables
of a shared global vector, run projection or proximal-splitting iterations
with neighbor-only communication, and decide feasibility or infeasibility
with per-agent tests.  Includes a flow-feasibility problem family, a random
connected digraph generator, an exact max-flow oracle, a synchronous
message-passing simulator and a CLI.
"""

from .convergence import AgentStatus, Verdict, detect, error_bound_T
from .coupling import (
    CouplingStructure,
    UnownedVariableError,
    build_coupling,
    consensus_project,
    consensus_residual,
    gather_average,
    scatter,
)
from .flowprob import (
    CalibrationDivergedError,
    FlowInstance,
    build_cfp,
    calibrate_feasible,
    calibrate_infeasible,
    calibrate_infeasible_projectable,
    maxflow_feasible,
    node_set,
)
from .graphgen import GenerationFailedError, SignedAdjacency, generate_graph, pick_source_sink
from .netsim import Message, RoundLog, exchange_shared, run_distributed
from .sets import (
    Box,
    Composite,
    CompositeNoConvergeError,
    ConvexSet,
    Halfspace,
    Hyperplane,
)
from .solvers import (
    ALGORITHMS,
    FeasibilityProblem,
    IterationTrace,
    SolveReport,
    SolveStatus,
    SolverConfig,
    solve,
    solve_afb,
    solve_alm,
    solve_dr,
    solve_dykstra,
    solve_falm,
    solve_fb,
    solve_mpa,
    solve_vn,
    t_next,
    theta_next,
)

__version__ = "0.1.0"
