"""Shared fixtures and independent test oracles."""

import itertools

import numpy as np
import pytest

from cfpsplit.coupling import CouplingStructure, build_coupling
from cfpsplit.flowprob import (
    CalibrationDivergedError,
    calibrate_feasible,
    calibrate_infeasible_projectable,
)
from cfpsplit.graphgen import directed_edges, generate_graph, pick_source_sink
from cfpsplit.sets import Box, Halfspace, Hyperplane, make_block_projector
from cfpsplit.solvers import FeasibilityProblem


# ---------------------------------------------------------------------------
# toy problems: two agents sharing one scalar variable
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def pair_coupling() -> CouplingStructure:
    return build_coupling([{0}, {0}], 1)


@pytest.fixture(scope="session")
def pair_feasible(pair_coupling) -> FeasibilityProblem:
    # agent 0: x <= 2, agent 1: 1 <= x <= 5; intersection [1, 2]
    return FeasibilityProblem(
        pair_coupling,
        (Halfspace(np.array([1.0]), 2.0), Box(np.array([1.0]), np.array([5.0]))),
    )


@pytest.fixture(scope="session")
def pair_infeasible(pair_coupling) -> FeasibilityProblem:
    # agent 0: x <= 0, agent 1: x >= 1; empty intersection, gap 1
    return FeasibilityProblem(
        pair_coupling,
        (Halfspace(np.array([1.0]), 0.0), Box(np.array([1.0]), np.array([np.inf]))),
    )


# ---------------------------------------------------------------------------
# dense stacking-map oracle for the consensus projection
# ---------------------------------------------------------------------------

def dense_stack_matrix(c: CouplingStructure) -> np.ndarray:
    """Materialize the 0-1 stacking map (tests only)."""
    E = np.zeros((c.total_local, c.n_global))
    for i, sl in enumerate(c.slices):
        for row, j in zip(range(sl.start, sl.stop), c.J[i]):
            E[row, j] = 1.0
    return E


def dense_consensus_project(S: np.ndarray, c: CouplingStructure) -> np.ndarray:
    """Normal-equations projection onto the consensus subspace (tests only)."""
    E = dense_stack_matrix(c)
    v = np.linalg.solve(E.T @ E, E.T @ S)
    return E @ v


def random_coupling(rng: np.random.Generator, n_global: int, n_agents: int):
    """Random index sets covering all variables, each agent owning >= 1."""
    J = [set() for _ in range(n_agents)]
    for j in range(n_global):
        n_owners = 1 + int(rng.binomial(min(3, n_agents - 1), 0.4)) if n_agents > 1 else 1
        owners = rng.choice(n_agents, size=n_owners, replace=False)
        for i in owners:
            J[int(i)].add(j)
    for i in range(n_agents):
        if not J[i]:
            J[i].add(int(rng.integers(n_global)))
    return build_coupling(J, n_global)


# ---------------------------------------------------------------------------
# active-set enumeration oracle for polyhedral projection
# ---------------------------------------------------------------------------

def polyhedron_rows(members):
    """Split members into equality rows (C, d) and inequality rows (A, b)."""
    eq_rows, eq_rhs, in_rows, in_rhs = [], [], [], []
    for m in members:
        if isinstance(m, Hyperplane):
            eq_rows.append(m.a)
            eq_rhs.append(m.b)
        elif isinstance(m, Halfspace):
            in_rows.append(m.a)
            in_rhs.append(m.b)
        elif isinstance(m, Box):
            d = m.dim
            for q in range(d):
                if np.isfinite(m.upper[q]):
                    row = np.zeros(d)
                    row[q] = 1.0
                    in_rows.append(row)
                    in_rhs.append(m.upper[q])
                if np.isfinite(m.lower[q]):
                    row = np.zeros(d)
                    row[q] = -1.0
                    in_rows.append(row)
                    in_rhs.append(-m.lower[q])
        else:  # pragma: no cover
            raise TypeError(f"oracle cannot handle {type(m)}")
    return eq_rows, eq_rhs, in_rows, in_rhs


def oracle_project(members, x: np.ndarray) -> np.ndarray:
    """Exact polyhedral projection by enumerating active inequality subsets.

    For each subset treated as equalities (together with all true
    equalities), solve the equality-constrained least-squares candidate via
    the KKT system, keep the feasible candidate closest to ``x``.
    """
    eq_rows, eq_rhs, in_rows, in_rhs = polyhedron_rows(members)
    A = np.asarray(in_rows) if in_rows else np.zeros((0, x.size))
    b = np.asarray(in_rhs) if in_rhs else np.zeros(0)
    C = np.asarray(eq_rows) if eq_rows else np.zeros((0, x.size))
    d = np.asarray(eq_rhs) if eq_rhs else np.zeros(0)

    def feasible(y):
        return (
            (C.size == 0 or np.max(np.abs(C @ y - d)) <= 1e-8)
            and (A.size == 0 or np.max(A @ y - b) <= 1e-8)
        )

    best, best_dist = None, np.inf
    for r in range(len(in_rows) + 1):
        for subset in itertools.combinations(range(len(in_rows)), r):
            M = np.vstack([C] + [A[list(subset)]]) if subset else C
            m = np.concatenate([d, b[list(subset)]]) if subset else d
            if M.size == 0:
                y = x.copy()
            else:
                lam, *_ = np.linalg.lstsq(M @ M.T, M @ x - m, rcond=None)
                y = x - M.T @ lam
                if np.max(np.abs(M @ y - m)) > 1e-7:
                    continue  # inconsistent active set
            if feasible(y):
                dist = float(np.linalg.norm(y - x))
                if dist < best_dist - 1e-12:
                    best, best_dist = y, dist
    assert best is not None, "oracle found no feasible candidate"
    return best


# ---------------------------------------------------------------------------
# flow-instance factory with session caching
# ---------------------------------------------------------------------------

_flow_cache: dict = {}


def flow_problem(n_nodes, seed, feasible=True, edge_prob=0.3, margin=1.25):
    """Calibrated flow instance and its coupled problem, cached per key.

    On calibration divergence the seed advances; the effective seed is part
    of the returned tuple so tests stay deterministic.
    """
    key = (n_nodes, seed, feasible, edge_prob, margin)
    if key not in _flow_cache:
        s = seed
        while True:
            try:
                g = generate_graph(n_nodes, seed=s, edge_prob=edge_prob)
                edges = directed_edges(g)
                u, o = pick_source_sink(g)
                if feasible:
                    inst = calibrate_feasible(n_nodes, edges, u, o)
                else:
                    inst = calibrate_infeasible_projectable(
                        n_nodes, edges, u, o, margin=margin
                    )
                break
            except CalibrationDivergedError:
                s += 1000
        from cfpsplit.flowprob import build_cfp

        problem = FeasibilityProblem(*build_cfp(inst))
        _flow_cache[key] = (inst, problem, s)
    return _flow_cache[key]


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    """Compile the projection kernel once before any timed test."""
    bp = make_block_projector([Box(np.zeros(2), np.ones(2))])
    bp.project(np.array([2.0, -1.0]))
