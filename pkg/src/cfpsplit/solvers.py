"""Distributed splitting and projection solvers for coupled feasibility.

Eight methods over one problem form (a shared-variable coupling plus one
convex set per agent):

========  ==========================================================
``fb``    forward-backward splitting on the distance-sum objective
``afb``   accelerated forward-backward (momentum on the same objective)
``dr``    Douglas-Rachford splitting on the two-term objective
``alm``   alternating linearization
``falm``  fast alternating linearization (momentum on iterates and duals)
``vn``    von Neumann's alternating projections
``dykstra``  Dykstra's alternating projections
``mpa``   mean projection baseline (all-to-all weighted projections)
========  ==========================================================

Every iteration does per-agent work plus exactly one neighbor averaging
exchange (``alm``/``falm``/``dr`` add one detector exchange, and one setup
exchange at initialization); all exchanges go through a ``net`` object so a
message-passing simulation can reproduce a run bit for bit.  Per-agent
substeps within an iteration are barrier-synchronized and order-independent.

Each run is deterministic: same problem, config and start give bit-identical
traces.  A solver instance owns mutable state and must not be shared between
concurrent runs; separate runs over the same problem are safe.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .convergence import AgentStatus, Verdict, detect, rel_change
from .coupling import CouplingStructure, gather_average, scatter
from .sets import make_block_projector

__all__ = [
    "ALGORITHMS",
    "FeasibilityProblem",
    "SolverConfig",
    "SolveStatus",
    "IterationTrace",
    "SolveReport",
    "theta_next",
    "t_next",
    "solve",
    "solve_fb",
    "solve_afb",
    "solve_dr",
    "solve_alm",
    "solve_falm",
    "solve_vn",
    "solve_dykstra",
    "solve_mpa",
    "run_iterates",
]

ALGORITHMS = ("fb", "afb", "dr", "alm", "falm", "vn", "dykstra", "mpa")


@dataclass(frozen=True)
class FeasibilityProblem:
    """A coupling structure plus one convex set per agent.

    ``sets[i].dim`` must equal ``len(coupling.J[i])``; agent i's set
    constrains the restriction of the global vector to its own indices.
    """

    coupling: CouplingStructure
    sets: tuple

    def __post_init__(self):
        sets = tuple(self.sets)
        if len(sets) != self.coupling.n_agents:
            raise ValueError("need exactly one set per agent")
        for i, (s, J) in enumerate(zip(sets, self.coupling.J)):
            if s.dim != J.size:
                raise ValueError(
                    f"agent {i}: set dim {s.dim} != owned index count {J.size}"
                )
        object.__setattr__(self, "sets", sets)

    @property
    def n_agents(self) -> int:
        return self.coupling.n_agents


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm choice and tuning knobs.

    ``gamma`` and ``lam`` may be constants or callables ``k -> value``
    (iteration index starts at 1).  Bounds are checked per iteration:
    fb needs gamma in [eps, 2-eps] and lam in [eps, 1]; dr needs a constant
    gamma > 0 and lam in [eps, 2-eps].  ``mu1``/``mu2`` default to 1, which
    is admissible because both objective terms have unit-Lipschitz gradients.
    """

    algorithm: str = "afb"
    gamma: object = 1.0
    lam: object = 1.0
    theta0: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    epsilon: float = 1e-6
    max_iter: int = 10_000
    rc_threshold: float = 1e-4
    feas_tol: float = 1e-6
    objective_floor: float = 1e-8
    alpha_weights: object = None
    x0: object = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if not (0.0 < self.theta0 <= 1.0):
            raise ValueError("theta0 must lie in (0, 1]")
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ValueError("mu1 and mu2 must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.rc_threshold < 0 or self.feas_tol < 0:
            raise ValueError("thresholds must be nonnegative")


class SolveStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass
class IterationTrace:
    """Per-iteration record, evaluated at the iterate after update ``k``."""

    k: int
    objective: float
    t_v: float
    per_agent_rc: np.ndarray
    messages: int
    displacement: float | None = None


@dataclass
class SolveReport:
    status: SolveStatus
    iterations: int
    final_v: np.ndarray
    final_S: np.ndarray
    trace: list
    total_messages: int


def theta_next(theta: float) -> float:
    """Largest admissible next momentum parameter.

    Solves ``(1 - t) / t^2 = 1 / theta^2`` for ``t`` in (0, 1]; equality is
    the fastest admissible schedule.
    """
    if not (0.0 < theta <= 1.0):
        raise ValueError("theta must lie in (0, 1]")
    th2 = theta * theta
    return 0.5 * (-th2 + theta * np.sqrt(th2 + 4.0))


def t_next(t: float) -> float:
    """Momentum counter update ``(1 + sqrt(1 + t^2)) / 2``."""
    if t < 1.0:
        raise ValueError("t must be >= 1")
    return 0.5 * (1.0 + np.sqrt(1.0 + t * t))


def _schedule_value(spec, k: int) -> float:
    return float(spec(k)) if callable(spec) else float(spec)


def _block_norms_sq(X: np.ndarray, slices) -> np.ndarray:
    return np.asarray([float(np.dot(X[sl], X[sl])) for sl in slices])


class _DirectNet:
    """In-process exchange: plain averaging plus topology-derived counts."""

    def __init__(self, coupling: CouplingStructure):
        self.coupling = coupling
        self._pending = 0

    def average(self, X: np.ndarray, purpose: str = "update") -> np.ndarray:
        self._pending += self.coupling.pairwise_exchange_count
        return gather_average(X, self.coupling)

    def broadcast_combine(self, v, V, P, weights) -> np.ndarray:
        n = self.coupling.n_agents
        self._pending += n * (n - 1)
        return mpa_combine(v, V, P, weights, self.coupling)

    def take_count(self) -> int:
        count = self._pending
        self._pending = 0
        return count


def mpa_combine(v, V, P, weights, coupling) -> np.ndarray:
    """Weighted mean of full-space projections, as index arithmetic.

    Each lifted projection equals ``v`` outside the agent's indices, so the
    combination is ``v`` plus weighted per-agent corrections, accumulated in
    ascending agent order.
    """
    out = v.copy()
    lens = [J.size for J in coupling.J]
    w = np.repeat(np.asarray(weights, dtype=np.float64), lens)
    np.add.at(out, coupling.flat_index, w * (P - V))
    return out


@dataclass
class _Monitor:
    v: np.ndarray
    blocks: np.ndarray
    dists: np.ndarray
    cons_dev_sq: np.ndarray | None
    consensus_ok: bool
    objective: float
    t_v: float
    displacement: float | None = None


class _EngineBase:
    needs_consensus = False
    rc_kind = "r1"

    def __init__(self, problem: FeasibilityProblem, config: SolverConfig, net):
        self.problem = problem
        self.config = config
        self.c = problem.coupling
        self.bp = make_block_projector(problem.sets)
        self.slices = self.c.slices
        x0 = config.x0
        if x0 is None:
            x0 = np.zeros(self.c.n_global)
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (self.c.n_global,):
            raise ValueError("x0 must have length n_global")
        self.x0 = x0
        self._cached_proj = None  # (iterate, projection) reusable by advance

    # -- helpers -----------------------------------------------------------
    def _project(self, X: np.ndarray) -> np.ndarray:
        cached = self._cached_proj
        if cached is not None and cached[0] is X:
            return cached[1]
        return self.bp.project(X)

    def _cache(self, X: np.ndarray, P: np.ndarray) -> None:
        self._cached_proj = (X, P)

    def _dist_monitor(self, X: np.ndarray):
        """Projection, per-agent distances and error bound at a consensual X."""
        P = self.bp.project(X)
        dists = np.sqrt(_block_norms_sq(X - P, self.slices))
        return P, dists

    def _t_v_at(self, v: np.ndarray) -> float:
        V = scatter(v, self.c)
        _, dists = self._dist_monitor(V)
        return float(dists.max())

    def advance(self, k: int, net) -> None:
        raise NotImplementedError

    def monitor(self, net) -> _Monitor:
        raise NotImplementedError

    @property
    def primary(self) -> np.ndarray:
        """The iterate a reference run extracts after its last advance."""
        raise NotImplementedError


class _FBEngine(_EngineBase):
    """Relaxed projection onto the sets, then consensus averaging."""

    def __init__(self, problem, config, net):
        super().__init__(problem, config, net)
        self.v = self.x0.copy()
        self.S = scatter(self.v, self.c)

    def advance(self, k, net):
        eps = self.config.epsilon
        g = _schedule_value(self.config.gamma, k)
        l = _schedule_value(self.config.lam, k)
        if not (eps <= g <= 2.0 - eps):
            raise ValueError(f"fb gamma schedule value {g} outside [eps, 2-eps]")
        if not (eps <= l <= 1.0):
            raise ValueError(f"fb lambda schedule value {l} outside [eps, 1]")
        P = self._project(self.S)
        Y = (1.0 - g) * self.S + g * P
        v_new = net.average(Y)
        self.S = (1.0 - l) * self.S + l * scatter(v_new, self.c)
        self.v = (1.0 - l) * self.v + l * v_new
        self._cached_proj = None

    def monitor(self, net):
        P, dists = self._dist_monitor(self.S)
        self._cache(self.S, P)
        return _Monitor(
            v=self.v,
            blocks=self.S,
            dists=dists,
            cons_dev_sq=None,
            consensus_ok=True,
            objective=0.5 * float(np.sum(dists**2)),
            t_v=float(dists.max()),
        )

    @property
    def primary(self):
        return self.S


class _AFBEngine(_EngineBase):
    """Accelerated proximal gradient on the distance-sum objective."""

    def __init__(self, problem, config, net):
        super().__init__(problem, config, net)
        self.v = self.x0.copy()
        self.S = scatter(self.v, self.c)
        self.G = self.S.copy()
        self.theta = config.theta0

    def advance(self, k, net):
        th = self.theta
        Y = (1.0 - th) * self.S + th * self.G
        PY = self.bp.project(Y)
        v_new = net.average(PY)
        Vs = scatter(v_new, self.c)
        self.G = ((th - 1.0) / th) * self.S + (1.0 / th) * Vs
        self.S = Vs
        self.v = v_new
        self.theta = theta_next(th)

    def monitor(self, net):
        _, dists = self._dist_monitor(self.S)
        return _Monitor(
            v=self.v,
            blocks=self.S,
            dists=dists,
            cons_dev_sq=None,
            consensus_ok=True,
            objective=0.5 * float(np.sum(dists**2)),
            t_v=float(dists.max()),
        )

    @property
    def primary(self):
        return self.S


class _VNEngine(_EngineBase):
    """Alternate projection onto the sets and the consensus subspace."""

    def __init__(self, problem, config, net):
        super().__init__(problem, config, net)
        self.v = self.x0.copy()
        self.displacement = None

    def advance(self, k, net):
        V = scatter(self.v, self.c)
        P = self._project(V)
        self.displacement = float(np.linalg.norm(V - P))
        self.v = net.average(P)
        self._cached_proj = None

    def monitor(self, net):
        V = scatter(self.v, self.c)
        P, dists = self._dist_monitor(V)
        self._cache(V, P)
        return _Monitor(
            v=self.v,
            blocks=V,
            dists=dists,
            cons_dev_sq=None,
            consensus_ok=True,
            objective=0.5 * float(np.sum(dists**2)),
            t_v=float(dists.max()),
            displacement=self.displacement,
        )

    @property
    def primary(self):
        return scatter(self.v, self.c)


class _DykstraEngine(_EngineBase):
    """Alternating projections with per-agent dual increments."""

    def __init__(self, problem, config, net):
        super().__init__(problem, config, net)
        self.v = self.x0.copy()
        self.lam_bar = np.zeros(self.c.total_local)
        self.displacement = None

    def advance(self, k, net):
        V = scatter(self.v, self.c)
        S_new = self.bp.project(V - self.lam_bar)
        self.displacement = float(np.linalg.norm(V - S_new))
        v_new = net.average(S_new)
        self.lam_bar = self.lam_bar + (S_new - scatter(v_new, self.c))
        self.v = v_new

    def monitor(self, net):
        V = scatter(self.v, self.c)
        _, dists = self._dist_monitor(V)
        return _Monitor(
            v=self.v,
            blocks=V,
            dists=dists,
            cons_dev_sq=None,
            consensus_ok=True,
            objective=0.5 * float(np.sum(dists**2)),
            t_v=float(dists.max()),
            displacement=self.displacement,
        )

    @property
    def primary(self):
        return scatter(self.v, self.c)


class _MPAEngine(_EngineBase):
    """Weighted mean of full-space projections; all-to-all communication."""

    def __init__(self, problem, config, net):
        super().__init__(problem, config, net)
        n = self.c.n_agents
        w = config.alpha_weights
        if w is None:
            w = np.full(n, 1.0 / n)
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (n,) or np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("alpha weights must be positive and sum to 1")
        self.weights = w
        self.v = self.x0.copy()

    def advance(self, k, net):
        V = scatter(self.v, self.c)
        P = self._project(V)
        self.v = net.broadcast_combine(self.v, V, P, self.weights)
        self._cached_proj = None

    def monitor(self, net):
        V = scatter(self.v, self.c)
        P, dists = self._dist_monitor(V)
        self._cache(V, P)
        return _Monitor(
            v=self.v,
            blocks=V,
            dists=dists,
            cons_dev_sq=None,
            consensus_ok=True,
            objective=0.5 * float(np.sum(dists**2)),
            t_v=float(dists.max()),
        )

    @property
    def primary(self):
        return scatter(self.v, self.c)


class _DREngine(_EngineBase):
    """Douglas-Rachford on the two-term objective.

    The objective is recorded at the prox output (the sequence converging to
    the minimizer); the governing iterate Y converges to a fixed point offset
    from it by the gradient step.  ``monitor`` must run after every
    ``advance`` for the recorded objective to use a fresh consensus snapshot.
    """

    needs_consensus = True
    rc_kind = "r2"

    def __init__(self, problem, config, net):
        super().__init__(problem, config, net)
        if callable(config.gamma):
            raise ValueError("dr needs a constant gamma > 0")
        self.gamma = float(config.gamma)
        if self.gamma <= 0:
            raise ValueError("dr needs gamma > 0")
        self.Y = scatter(self.x0, self.c)
        self.C = net.average(self.Y, purpose="init")
        self.S_prox = None
        self.v_z = None

    def advance(self, k, net):
        eps = self.config.epsilon
        l = _schedule_value(self.config.lam, k)
        if not (eps <= l <= 2.0 - eps):
            raise ValueError(f"dr lambda schedule value {l} outside [eps, 2-eps]")
        g = self.gamma
        P = self._project(self.Y)
        S_new = (self.Y + g * P) / (1.0 + g)
        Z = 2.0 * S_new - self.Y
        v_z = net.average(Z)
        self.Y = self.Y + l * (
            ((1.0 - g) / (1.0 + g)) * S_new
            - self.Y / (1.0 + g)
            + (g / (1.0 + g)) * scatter(v_z, self.c)
        )
        self.S_prox = S_new
        self.v_z = v_z
        self._cached_proj = None

    def monitor(self, net):
        C_new = net.average(self.Y, purpose="detector")
        P, dists = self._dist_monitor(self.Y)
        self._cache(self.Y, P)
        dev = self.Y - scatter(C_new, self.c)
        cons_dev_sq = _block_norms_sq(dev, self.slices)
        consensus_ok = float(np.sqrt(cons_dev_sq.sum())) <= self.config.feas_tol
        # objective at the prox output; its average derives from the main
        # exchange and the previous snapshot, costing no extra round
        avg_S = 0.5 * (self.v_z + self.C)
        _, dists_S = self._dist_monitor(self.S_prox)
        cons_S = self.S_prox - scatter(avg_S, self.c)
        objective = 0.5 * float(np.sum(dists_S**2)) + 0.5 * float(np.dot(cons_S, cons_S))
        self.C = C_new
        return _Monitor(
            v=C_new,
            blocks=self.Y,
            dists=dists,
            cons_dev_sq=cons_dev_sq,
            consensus_ok=consensus_ok,
            objective=objective,
            t_v=self._t_v_at(C_new),
        )

    @property
    def primary(self):
        return self.S_prox


class _ALMEngine(_EngineBase):
    """Alternating linearization with explicit dual updates."""

    needs_consensus = True
    rc_kind = "r2"

    def __init__(self, problem, config, net):
        super().__init__(problem, config, net)
        self.Y = scatter(self.x0, self.c)
        C0 = net.average(self.Y, purpose="init")
        self.xi = self.Y - scatter(C0, self.c)

    def advance(self, k, net):
        mu1, mu2 = self.config.mu1, self.config.mu2
        W = self.Y - mu1 * self.xi
        PW = self.bp.project(W)
        S_new = (W + mu1 * PW) / (1.0 + mu1)
        nu = -self.xi - (S_new - self.Y) / mu1
        X = S_new - mu2 * nu
        v_new = net.average(X)
        Y_new = (X + mu2 * scatter(v_new, self.c)) / (1.0 + mu2)
        self.xi = -nu + (S_new - Y_new) / mu2
        self.Y = Y_new

    def monitor(self, net):
        C_new = net.average(self.Y, purpose="detector")
        _, dists = self._dist_monitor(self.Y)
        dev = self.Y - scatter(C_new, self.c)
        cons_dev_sq = _block_norms_sq(dev, self.slices)
        consensus_ok = float(np.sqrt(cons_dev_sq.sum())) <= self.config.feas_tol
        objective = 0.5 * float(np.sum(dists**2)) + 0.5 * float(cons_dev_sq.sum())
        return _Monitor(
            v=C_new,
            blocks=self.Y,
            dists=dists,
            cons_dev_sq=cons_dev_sq,
            consensus_ok=consensus_ok,
            objective=objective,
            t_v=self._t_v_at(C_new),
        )

    @property
    def primary(self):
        return self.Y


class _FALMEngine(_ALMEngine):
    """Fast alternating linearization: momentum on iterates and duals."""

    def __init__(self, problem, config, net):
        _EngineBase.__init__(self, problem, config, net)
        self.Y = scatter(self.x0, self.c)
        self.Z = self.Y.copy()
        C0 = net.average(self.Z, purpose="init")
        self.beta = self.Z - scatter(C0, self.c)
        self.xi = np.zeros_like(self.Y)  # unused at k=1: momentum weight is 0
        self.t = 1.0

    def advance(self, k, net):
        mu1, mu2 = self.config.mu1, self.config.mu2
        W = self.Z - mu1 * self.beta
        PW = self.bp.project(W)
        S_new = (W + mu1 * PW) / (1.0 + mu1)
        nu = -self.beta - (S_new - self.Z) / mu1
        X = S_new - mu2 * nu
        v_new = net.average(X)
        Y_new = (X + mu2 * scatter(v_new, self.c)) / (1.0 + mu2)
        xi_new = -nu + (S_new - Y_new) / mu2
        t_new = t_next(self.t)
        momentum = (self.t - 1.0) / t_new
        self.Z = Y_new + momentum * (Y_new - self.Y)
        self.beta = xi_new + momentum * (xi_new - self.xi)
        self.Y = Y_new
        self.xi = xi_new
        self.t = t_new


_ENGINES = {
    "fb": _FBEngine,
    "afb": _AFBEngine,
    "dr": _DREngine,
    "alm": _ALMEngine,
    "falm": _FALMEngine,
    "vn": _VNEngine,
    "dykstra": _DykstraEngine,
    "mpa": _MPAEngine,
}


def _rc_array(kind: str, prev: _Monitor, cur: _Monitor) -> np.ndarray:
    d_prev = prev.dists**2
    d_cur = cur.dists**2
    if kind == "r1":
        num = np.abs(d_cur - d_prev)
        den = d_prev
    else:
        num = np.abs(d_cur - d_prev) + np.abs(cur.cons_dev_sq - prev.cons_dev_sq)
        den = d_prev + prev.cons_dev_sq
    return np.asarray([rel_change(float(n), float(d)) for n, d in zip(num, den)])


def run_engine(problem: FeasibilityProblem, config: SolverConfig, net) -> SolveReport:
    """Drive one algorithm to a verdict over the given exchange layer."""
    engine = _ENGINES[config.algorithm](problem, config, net)
    init_messages = net.take_count()
    trace: list[IterationTrace] = []
    prev_mon: _Monitor | None = None
    status = SolveStatus.MAX_ITER
    mon: _Monitor | None = None
    n_agents = problem.n_agents
    for k in range(1, config.max_iter + 1):
        engine.advance(k, net)
        mon = engine.monitor(net)
        messages_k = net.take_count()
        if prev_mon is None:
            rc = np.full(n_agents, np.inf)
        else:
            rc = _rc_array(engine.rc_kind, prev_mon, mon)
        trace.append(
            IterationTrace(
                k=k,
                objective=mon.objective,
                t_v=mon.t_v,
                per_agent_rc=rc,
                messages=messages_k,
                displacement=mon.displacement,
            )
        )
        if mon.cons_dev_sq is None:
            local_obj = 0.5 * mon.dists**2
        else:
            local_obj = 0.5 * mon.dists**2 + 0.5 * mon.cons_dev_sq
        statuses = [
            AgentStatus(
                locally_feasible=bool(mon.dists[i] <= config.feas_tol),
                rc=float(rc[i]),
                local_objective=float(local_obj[i]),
            )
            for i in range(n_agents)
        ]
        verdict = detect(
            statuses,
            needs_consensus_check=engine.needs_consensus,
            consensus_ok=mon.consensus_ok,
            rc_threshold=config.rc_threshold,
            objective_floor=config.objective_floor,
        )
        prev_mon = mon
        if verdict is Verdict.FEASIBLE:
            status = SolveStatus.FEASIBLE
            break
        if verdict is Verdict.INFEASIBLE_CONVERGED:
            status = SolveStatus.INFEASIBLE
            break
    total = init_messages + sum(t.messages for t in trace)
    return SolveReport(
        status=status,
        iterations=len(trace),
        final_v=np.asarray(mon.v, dtype=np.float64).copy(),
        final_S=np.asarray(mon.blocks, dtype=np.float64).copy(),
        trace=trace,
        total_messages=total,
    )


def solve(problem: FeasibilityProblem, config: SolverConfig | None = None) -> SolveReport:
    """Run ``config.algorithm`` with in-process exchanges."""
    config = config or SolverConfig()
    return run_engine(problem, config, _DirectNet(problem.coupling))


def _solve_as(algorithm):
    def _solver(problem, config: SolverConfig | None = None) -> SolveReport:
        config = replace(config or SolverConfig(), algorithm=algorithm)
        return solve(problem, config)

    _solver.__name__ = f"solve_{algorithm}"
    _solver.__qualname__ = _solver.__name__
    _solver.__doc__ = f"Run the {algorithm} solver (see module docstring)."
    return _solver


solve_fb = _solve_as("fb")
solve_afb = _solve_as("afb")
solve_dr = _solve_as("dr")
solve_alm = _solve_as("alm")
solve_falm = _solve_as("falm")
solve_vn = _solve_as("vn")
solve_dykstra = _solve_as("dykstra")
solve_mpa = _solve_as("mpa")


def run_iterates(problem: FeasibilityProblem, config: SolverConfig, n_iters: int) -> np.ndarray:
    """Bare iteration without monitoring; returns the primary iterate.

    Used for long reference runs where only the limit point matters.
    """
    net = _DirectNet(problem.coupling)
    engine = _ENGINES[config.algorithm](problem, config, net)
    for k in range(1, n_iters + 1):
        engine.advance(k, net)
    return engine.primary.copy()
