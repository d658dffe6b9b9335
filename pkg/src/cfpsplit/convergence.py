"""Neighbor-local convergence and infeasibility detection.

Each agent monitors two things: whether its local iterate satisfies its own
constraint set, and the relative change of its share of the objective.  The
combined verdict is:

* every agent locally feasible (plus global consensus, for algorithms whose
  iterates are not consensual by construction)  ->  ``FEASIBLE``;
* every agent's relative change below the threshold while some agent still
  carries a non-negligible objective term  ->  ``INFEASIBLE_CONVERGED``;
* otherwise  ->  ``CONTINUE``.

Feasibility takes precedence when both conditions fire simultaneously.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingStructure, consensus_residual

__all__ = [
    "AgentStatus",
    "Verdict",
    "error_bound_T",
    "rel_change",
    "local_rc_r1",
    "local_rc_r2",
    "local_feasibility",
    "consensus_check",
    "detect",
]

#: Denominators at or below this are treated as exact zeros (0/0 -> 0).
DENOM_GUARD = 1e-15


@dataclass(frozen=True)
class AgentStatus:
    """One agent's view for the detector."""

    locally_feasible: bool
    rc: float
    local_objective: float


class Verdict(enum.Enum):
    CONTINUE = "continue"
    FEASIBLE = "feasible"
    INFEASIBLE_CONVERGED = "infeasible_converged"


def error_bound_T(v: np.ndarray, sets, coupling: CouplingStructure) -> float:
    """Largest distance from ``v`` to any constraint set.

    Computed per agent on the restriction of ``v`` to that agent's indices;
    zero (up to tolerance) exactly at feasible points.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (coupling.n_global,):
        raise ValueError("v does not conform to the coupling")
    return max(s.dist(v[J]) for s, J in zip(sets, coupling.J))


def rel_change(numerator: float, denominator: float) -> float:
    """Guarded ratio: 0/0 -> 0, x/0 -> inf for x above the guard."""
    if denominator <= DENOM_GUARD:
        return 0.0 if numerator <= DENOM_GUARD else np.inf
    return numerator / denominator


def local_rc_r1(set_i, s_prev: np.ndarray, s_curr: np.ndarray) -> float:
    """Relative change of one agent's squared set distance.

    ``|d_curr^2 - d_prev^2| / d_prev^2`` with distances to the agent's own
    set; an agent feasible at both iterates reports 0.
    """
    d_prev = set_i.dist(s_prev) ** 2
    d_curr = set_i.dist(s_curr) ** 2
    return rel_change(abs(d_curr - d_prev), d_prev)


def local_rc_r2(
    set_i,
    y_prev: np.ndarray,
    y_curr: np.ndarray,
    consensus_prev: np.ndarray,
    consensus_curr: np.ndarray,
) -> float:
    """Per-agent relative-change bound for the two-term objective.

    Combines the change of the squared set distance with the change of the
    squared deviation from the consensus snapshot (the agent's restriction of
    the network average), both normalized by the agent's previous total.
    """
    d_prev = set_i.dist(y_prev) ** 2
    d_curr = set_i.dist(y_curr) ** 2
    e_prev = float(np.sum((np.asarray(y_prev) - np.asarray(consensus_prev)) ** 2))
    e_curr = float(np.sum((np.asarray(y_curr) - np.asarray(consensus_curr)) ** 2))
    num = abs(d_curr - d_prev) + abs(e_curr - e_prev)
    return rel_change(num, d_prev + e_prev)


def local_feasibility(set_i, iterate: np.ndarray, tol: float = 1e-6) -> bool:
    """Containment of one agent's iterate in its own set, within ``tol``."""
    return set_i.contains(iterate, tol)


def consensus_check(Y: np.ndarray, coupling: CouplingStructure, tol: float = 1e-6) -> bool:
    """Whether the stacked iterate agrees across sharers, within ``tol``."""
    return consensus_residual(Y, coupling) <= tol


def detect(
    statuses,
    needs_consensus_check: bool,
    consensus_ok: bool,
    rc_threshold: float = 1e-4,
    objective_floor: float = 1e-8,
) -> Verdict:
    """Combine per-agent statuses into a network verdict.

    ``INFEASIBLE_CONVERGED`` requires every relative change below
    ``rc_threshold`` and at least one agent with a local objective above
    ``objective_floor``; the floor separates "converged to a zero objective
    but not yet feasible at tolerance" from genuine infeasibility.
    """
    statuses = list(statuses)
    if not statuses:
        raise ValueError("empty status list")
    if all(s.locally_feasible for s in statuses) and (
        consensus_ok or not needs_consensus_check
    ):
        return Verdict.FEASIBLE
    if all(s.rc < rc_threshold for s in statuses) and any(
        s.local_objective > objective_floor for s in statuses
    ):
        return Verdict.INFEASIBLE_CONVERGED
    return Verdict.CONTINUE
