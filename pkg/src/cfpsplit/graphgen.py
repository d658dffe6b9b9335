"""Random connected directed graphs with a signed adjacency matrix.

The adjacency matrix lives over {-1, 0, +1}: ``A[i, j] = +1`` when an edge
leaves node i toward j, ``-1`` when one enters i from j, so ``A`` is
skew-symmetric.  Every row must carry at least 3 nonzeros and both signs
(every node has in- and out-edges), and the undirected support must be
connected.

Rows are filled one at a time from random 0-1 draws, re-drawing until the
row degree and sign conditions hold; whole attempts restart when an inner
loop stalls or a built matrix fails validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SignedAdjacency",
    "GenerationFailedError",
    "generate_graph",
    "pick_source_sink",
    "directed_edges",
]

_INNER_DRAW_CAP = 10_000


class GenerationFailedError(RuntimeError):
    """No valid adjacency matrix within the attempt budget."""


@dataclass(frozen=True)
class SignedAdjacency:
    """Validated signed adjacency matrix of a connected directed graph."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.int8)
        problems = validate(A)
        if problems:
            raise ValueError("; ".join(problems))
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n_nodes(self) -> int:
        return self.A.shape[0]

    @property
    def out_degree(self) -> np.ndarray:
        return np.sum(self.A == 1, axis=1)

    @property
    def in_degree(self) -> np.ndarray:
        return np.sum(self.A == -1, axis=1)


def validate(A: np.ndarray):
    """All invariant violations of a candidate matrix (empty when valid)."""
    problems = []
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return ["matrix must be square"]
    if not np.all(np.isin(A, (-1, 0, 1))):
        problems.append("entries must lie in {-1, 0, +1}")
    if np.any(np.diag(A) != 0):
        problems.append("diagonal must be zero")
    if np.any(A != -A.T):
        problems.append("matrix must be skew-symmetric")
    nnz = np.sum(A != 0, axis=1)
    if np.any(nnz < 3):
        problems.append("every row needs at least 3 nonzeros")
    if np.any(np.sum(A == 1, axis=1) == 0) or np.any(np.sum(A == -1, axis=1) == 0):
        problems.append("every row needs both a +1 and a -1")
    if not _connected(A):
        problems.append("undirected support must be connected")
    return problems


def _connected(A: np.ndarray) -> bool:
    n = A.shape[0]
    support = A != 0
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(support[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def _attempt(rng: np.random.Generator, n: int, edge_prob: float):
    A = np.zeros((n, n), dtype=np.int8)
    for r in range(n - 1):
        tail = n - 1 - r  # free columns to the right of the diagonal
        left_nnz = int(np.sum(A[r, :r] != 0))
        x = None
        for _ in range(_INNER_DRAW_CAP):
            cand = (rng.random(tail) < edge_prob).astype(np.int8)
            if left_nnz + int(cand.sum()) > 2:
                x = cand
                break
        if x is None:
            return None
        left = A[r, :r]
        signed = None
        for _ in range(_INNER_DRAW_CAP):
            signs = np.where(rng.random(tail) < 0.5, 1, -1).astype(np.int8)
            cand = x * signs
            row = np.concatenate([left, cand])
            if np.any(row == 1) and np.any(row == -1):
                signed = cand
                break
        if signed is None:
            return None
        A[r, r + 1 :] = signed
        A[r + 1 :, r] = -signed  # skew-symmetry; the transpose block is negated
    return A


def generate_graph(
    n_nodes: int,
    seed: int,
    max_attempts: int = 1000,
    edge_prob: float = 0.5,
) -> SignedAdjacency:
    """Generate a valid :class:`SignedAdjacency`, deterministically per seed.

    ``edge_prob`` is the density of the 0-1 row draws; at ``n_nodes = 4``
    the minimum-degree condition forces the complete graph regardless.
    Attempts whose rows stall or whose finished matrix fails validation
    (including the connectivity check) are retried up to ``max_attempts``.
    """
    if n_nodes < 4:
        raise ValueError("need at least 4 nodes: rows of length < 3 cannot carry 3 nonzeros")
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if not (0.0 < edge_prob <= 1.0):
        raise ValueError("edge_prob must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        A = _attempt(rng, n_nodes, edge_prob)
        if A is not None and not validate(A):
            return SignedAdjacency(A)
    raise GenerationFailedError(f"no valid graph in {max_attempts} attempts")


def pick_source_sink(adj: SignedAdjacency):
    """Source = most outgoing edges, sink = most ingoing; lowest index wins ties.

    When both picks coincide, the sink moves to the next-best in-degree node.
    """
    out_deg = adj.out_degree
    in_deg = adj.in_degree
    u = int(np.argmax(out_deg))  # argmax returns the first (lowest) index on ties
    by_in = sorted(range(adj.n_nodes), key=lambda i: (-int(in_deg[i]), i))
    o = by_in[0]
    if o == u:
        o = by_in[1]
    return u, o


def directed_edges(adj: SignedAdjacency):
    """Edge list (tail, head) from the +1 entries of the upper relation."""
    edges = []
    A = adj.A
    n = adj.n_nodes
    for i in range(n):
        for j in range(i + 1, n):
            if A[i, j] == 1:
                edges.append((i, j))
            elif A[i, j] == -1:
                edges.append((j, i))
    return edges
