"""Shared-variable coupling structure and consensus projection.

A global vector ``v`` of length ``n_global`` is split across ``N`` agents.
Agent ``i`` owns the ordered index set ``J[i]``; its local block is the
restriction of ``v`` to those indices.  Product vectors (the stacked local
blocks) are represented as flat float64 arrays of length ``sum(|J_i|)``, with
block boundaries carried by the :class:`CouplingStructure`.  The selection
and stacking maps are realized purely as index arithmetic; no 0-1 matrices
are ever materialized outside of tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CouplingStructure",
    "UnownedVariableError",
    "build_coupling",
    "scatter",
    "gather_average",
    "consensus_project",
    "consensus_residual",
]


class UnownedVariableError(ValueError):
    """Some global variable index appears in no agent's index set."""

    def __init__(self, variable: int):
        self.variable = variable
        super().__init__(f"variable {variable} is owned by no agent")


@dataclass(frozen=True)
class CouplingStructure:
    """Immutable index bookkeeping for a loosely coupled problem.

    Attributes
    ----------
    n_global : int
        Number of global variables.
    J : tuple of ndarray
        Per-agent sorted global indices; ``J[i]`` has the indices agent ``i``
        owns, ascending.
    I : tuple of ndarray
        Per-variable sorted agent ids; ``I[j]`` lists the agents whose block
        contains variable ``j`` (the sharers of ``j``).
    Ne : tuple of ndarray
        Per-agent sorted neighbor ids: agents sharing at least one variable.
    degree : ndarray
        ``degree[j] == len(I[j]) >= 1``.
    slices : tuple of slice
        Block boundaries of each agent inside a flat product vector.
    flat_index : ndarray
        Concatenation of all ``J[i]``; maps flat product positions to global
        variable ids (the scatter map).
    """

    n_global: int
    J: tuple
    I: tuple
    Ne: tuple
    degree: np.ndarray
    slices: tuple
    flat_index: np.ndarray
    total_local: int
    shared_pairs: dict = field(repr=False)

    @property
    def n_agents(self) -> int:
        return len(self.J)

    def block(self, S: np.ndarray, i: int) -> np.ndarray:
        """View of agent ``i``'s block inside the flat product vector."""
        return S[self.slices[i]]

    def blocks(self, S: np.ndarray):
        """Iterate over per-agent block views of ``S``."""
        return [S[sl] for sl in self.slices]

    @property
    def pairwise_exchange_count(self) -> int:
        """Value transfers in one full neighbor exchange.

        Each sharer of a variable sends its copy to every co-sharer, so a
        variable shared by ``d`` agents costs ``d*(d-1)`` transfers per round.
        """
        d = self.degree
        return int(np.sum(d * (d - 1)))


def build_coupling(J, n_global: int) -> CouplingStructure:
    """Build a :class:`CouplingStructure` from per-agent index sets.

    Parameters
    ----------
    J : sequence of iterables of int
        ``J[i]`` holds the global variable indices owned by agent ``i``
        (0-based, duplicate-free).  Stored sorted ascending; block coordinate
        order follows the sorted indices.
    n_global : int
        Number of global variables; every index must lie in
        ``range(n_global)`` and every variable must be owned by at least one
        agent.

    Raises
    ------
    UnownedVariableError
        If some variable appears in no ``J[i]``.
    ValueError
        On out-of-range indices, duplicates inside one ``J[i]``, or empty
        agent index sets.
    """
    if n_global <= 0:
        raise ValueError("n_global must be positive")
    if len(J) == 0:
        raise ValueError("need at least one agent")

    J_arrays = []
    for i, idx in enumerate(J):
        a = np.asarray(sorted(idx), dtype=np.intp)
        if a.size == 0:
            raise ValueError(f"agent {i} owns no variables")
        if a[0] < 0 or a[-1] >= n_global:
            raise ValueError(f"agent {i} has an index outside [0, {n_global})")
        if np.any(np.diff(a) == 0):
            raise ValueError(f"agent {i} has duplicate indices")
        a.setflags(write=False)
        J_arrays.append(a)

    members: list[list[int]] = [[] for _ in range(n_global)]
    for i, a in enumerate(J_arrays):
        for j in a:
            members[j].append(i)
    for j, owners in enumerate(members):
        if not owners:
            raise UnownedVariableError(j)

    I_arrays = []
    for owners in members:
        a = np.asarray(owners, dtype=np.intp)  # ascending by construction
        a.setflags(write=False)
        I_arrays.append(a)

    neighbor_sets: list[set] = [set() for _ in range(len(J_arrays))]
    for owners in members:
        for i in owners:
            for k in owners:
                if k != i:
                    neighbor_sets[i].add(k)
    Ne_arrays = []
    for s in neighbor_sets:
        a = np.asarray(sorted(s), dtype=np.intp)
        a.setflags(write=False)
        Ne_arrays.append(a)

    slices = []
    offset = 0
    for a in J_arrays:
        slices.append(slice(offset, offset + a.size))
        offset += a.size

    flat_index = np.concatenate(J_arrays)
    flat_index.setflags(write=False)
    degree = np.asarray([len(o) for o in members], dtype=np.intp)
    degree.setflags(write=False)

    # variables shared by each ordered neighbor pair, in ascending id order
    shared_pairs: dict = {}
    for i, a in enumerate(J_arrays):
        ai = set(a.tolist())
        for r in Ne_arrays[i]:
            shared_pairs[(i, int(r))] = tuple(
                sorted(ai.intersection(J_arrays[r].tolist()))
            )

    return CouplingStructure(
        n_global=n_global,
        J=tuple(J_arrays),
        I=tuple(I_arrays),
        Ne=tuple(Ne_arrays),
        degree=degree,
        slices=tuple(slices),
        flat_index=flat_index,
        total_local=int(offset),
        shared_pairs=shared_pairs,
    )


def _check_global(v: np.ndarray, c: CouplingStructure) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (c.n_global,):
        raise ValueError(
            f"global vector length {v.shape} does not match n_global={c.n_global}"
        )
    return v


def _check_product(S: np.ndarray, c: CouplingStructure) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.shape != (c.total_local,):
        raise ValueError(
            f"product vector length {S.shape} does not match total {c.total_local}"
        )
    return S


def scatter(v: np.ndarray, c: CouplingStructure) -> np.ndarray:
    """Replicate a global vector into per-agent blocks: block i = v[J_i]."""
    v = _check_global(v, c)
    return v[c.flat_index]


def gather_average(S: np.ndarray, c: CouplingStructure) -> np.ndarray:
    """Per-variable arithmetic mean of all sharers' copies.

    Copies of variable ``j`` are accumulated in ascending agent order and
    divided by ``degree[j]``; the order is fixed so that a message-passing
    realization of the same average is bit-identical.
    """
    S = _check_product(S, c)
    acc = np.zeros(c.n_global)
    np.add.at(acc, c.flat_index, S)
    return acc / c.degree


def consensus_project(S: np.ndarray, c: CouplingStructure) -> np.ndarray:
    """Orthogonal projection onto the consensus subspace.

    The consensus subspace is the set of product vectors whose copies of each
    shared variable agree; the projection averages the copies and replicates
    the result.  Linear, idempotent and nonexpansive.
    """
    return scatter(gather_average(S, c), c)


def consensus_residual(S: np.ndarray, c: CouplingStructure) -> float:
    """2-norm distance of ``S`` from the consensus subspace (0 iff S is consensual)."""
    S = _check_product(S, c)
    return float(np.linalg.norm(S - consensus_project(S, c)))
