"""Deterministic synchronous message-passing execution of the solvers.

Agents exchange only neighbor values per round; every inter-agent value
transfer is logged as part of a :class:`Message`.  The numerical results are
bit-identical to the in-process solver path because both sides accumulate
each variable's copies in ascending agent order.

Round accounting: a neighbor exchange counts one transfer per (sender,
recipient, variable) triple, so a variable shared by ``d`` agents costs
``d*(d-1)`` transfers; the all-to-all broadcast of the mean projection
baseline counts ordered agent pairs.  Detector snapshots are tagged with
their own purpose so the extra communication of the consensus-deviation
tests is visible separately.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingStructure
from .solvers import FeasibilityProblem, SolveReport, SolverConfig, mpa_combine, run_engine

__all__ = [
    "Message",
    "RoundLog",
    "SimNet",
    "exchange_shared",
    "run_distributed",
    "write_round_log_csv",
]


@dataclass(frozen=True)
class Message:
    """One directed transfer: variable ids and values from sender to recipient."""

    sender: int
    recipient: int
    round: int
    payload: tuple  # ((variable id, value), ...)


@dataclass
class RoundLog:
    """All messages of one synchronous round plus its accounting count."""

    round: int
    purpose: str  # "update", "detector", "init" or "broadcast"
    messages: list
    count: int


def exchange_shared(
    S: np.ndarray,
    coupling: CouplingStructure,
    round_index: int = 0,
    purpose: str = "update",
    agent_order=None,
):
    """One consensus averaging realized by pairwise neighbor messages.

    Every sharer of a variable sends its copy to each co-sharer; each agent
    then averages the copies of its own variables (own copy included) in
    ascending sender order, which makes the result identical, bit for bit,
    to the in-process ``gather_average``.  ``agent_order`` only permutes the
    processing schedule; results must not depend on it.

    Returns ``(v, RoundLog)`` with ``v`` the averaged global vector.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.shape != (coupling.total_local,):
        raise ValueError("product vector does not conform to the coupling")
    n = coupling.n_agents
    order = list(range(n)) if agent_order is None else list(agent_order)
    if sorted(order) != list(range(n)):
        raise ValueError("agent_order must be a permutation of all agents")

    pos_in_block = []
    for i in range(n):
        J = coupling.J[i]
        pos_in_block.append({int(j): coupling.slices[i].start + k for k, j in enumerate(J)})

    messages = []
    inbox: dict = {}  # (recipient, sender) -> {variable: value}
    n_values = 0
    for i in order:
        for r in coupling.Ne[i]:
            shared = coupling.shared_pairs[(i, int(r))]
            payload = tuple((j, float(S[pos_in_block[i][j]])) for j in shared)
            messages.append(Message(i, int(r), round_index, payload))
            inbox[(int(r), i)] = dict(payload)
            n_values += len(payload)

    v = np.empty(coupling.n_global)
    for i in order:
        for j in coupling.J[i]:
            j = int(j)
            acc = 0.0
            for q in coupling.I[j]:
                q = int(q)
                if q == i:
                    acc += S[pos_in_block[i][j]]
                else:
                    acc += inbox[(i, q)][j]
            # every sharer computes the same mean; the lowest-id sharer's
            # copy is the one written out
            if i == int(coupling.I[j][0]):
                v[j] = acc / coupling.degree[j]
    return v, RoundLog(round_index, purpose, messages, n_values)


class SimNet:
    """Exchange layer that logs synchronous rounds for the solver engines."""

    def __init__(self, coupling: CouplingStructure):
        self.coupling = coupling
        self.logs: list[RoundLog] = []
        self._round = 0
        self._pending = 0

    def average(self, X: np.ndarray, purpose: str = "update") -> np.ndarray:
        v, log = exchange_shared(X, self.coupling, self._round, purpose)
        self._round += 1
        self.logs.append(log)
        self._pending += log.count
        return v

    def broadcast_combine(self, v, V, P, weights) -> np.ndarray:
        c = self.coupling
        messages = []
        for i in range(c.n_agents):
            payload = tuple(
                (int(j), float(P[c.slices[i].start + k]))
                for k, j in enumerate(c.J[i])
            )
            for r in range(c.n_agents):
                if r != i:
                    messages.append(Message(i, r, self._round, payload))
        log = RoundLog(self._round, "broadcast", messages, len(messages))
        self._round += 1
        self.logs.append(log)
        self._pending += log.count
        return mpa_combine(v, V, P, weights, self.coupling)

    def take_count(self) -> int:
        count = self._pending
        self._pending = 0
        return count


def run_distributed(problem: FeasibilityProblem, config: SolverConfig | None = None):
    """Run a solver over simulated message passing.

    Returns ``(report, round_logs)``; the report's trace is numerically
    identical to the in-process run of the same configuration.
    """
    config = config or SolverConfig()
    net = SimNet(problem.coupling)
    report: SolveReport = run_engine(problem, config, net)
    return report, net.logs


def write_round_log_csv(logs, path) -> None:
    """Export round logs as CSV rows (round, from, to, n_values)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "from", "to", "n_values"])
        for log in logs:
            for m in log.messages:
                writer.writerow([log.round, m.sender, m.recipient, len(m.payload)])
