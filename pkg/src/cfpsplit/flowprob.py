"""Flow feasibility: can an injected flow be relayed from source to sink?

A directed graph carries one flow variable per edge, bounded by the edge
capacity, with conservation at every node and a per-node cap on the total
outgoing flow.  Each node becomes one agent whose constraint set couples
only the flows of its incident edges; the requirement that both endpoints
agree on an edge's flow is exactly the shared-variable consensus constraint.

The module also provides an exact max-flow feasibility oracle (independent
of the iterative solvers) and the two capacity-calibration loops used to
manufacture feasible and infeasible instances from a bare graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .coupling import CouplingStructure, build_coupling
from .sets import Box, Composite, Halfspace, Hyperplane

__all__ = [
    "FlowInstance",
    "CalibrationDivergedError",
    "node_set",
    "build_cfp",
    "maxflow_feasible",
    "calibrate_feasible",
    "calibrate_infeasible",
    "locally_projectable",
    "calibrate_infeasible_projectable",
]


class CalibrationDivergedError(RuntimeError):
    """The calibration loop exceeded its round budget without a usable instance."""


@dataclass(frozen=True)
class FlowInstance:
    """A directed graph with capacities, a source/sink pair and an injection.

    ``edges[e] = (tail, head)``: flow on edge ``e`` runs from tail to head
    only.  ``edge_capacity[e]`` bounds it; ``nodal_capacity[i]`` bounds node
    i's total outgoing flow.  Node ids are 0-based.
    """

    n_nodes: int
    edges: tuple
    edge_capacity: np.ndarray
    nodal_capacity: np.ndarray
    source: int
    sink: int
    injection: float
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        cap = np.asarray(self.edge_capacity, dtype=np.float64)
        ncap = np.asarray(self.nodal_capacity, dtype=np.float64)
        if self.n_nodes < 2:
            raise ValueError("need at least two nodes")
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        for i in (self.source, self.sink):
            if not (0 <= i < self.n_nodes):
                raise ValueError("source/sink out of range")
        seen = set()
        for a, b in edges:
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes) or a == b:
                raise ValueError(f"bad edge ({a}, {b})")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge between {a} and {b}")
            seen.add(key)
        if cap.shape != (len(edges),) or np.any(cap < 0):
            raise ValueError("edge capacities must be nonnegative, one per edge")
        if ncap.shape != (self.n_nodes,) or np.any(ncap < 0):
            raise ValueError("nodal capacities must be nonnegative, one per node")
        if not self.injection > 0:
            raise ValueError("injection must be positive")
        cap.setflags(write=False)
        ncap.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_capacity", cap)
        object.__setattr__(self, "nodal_capacity", ncap)

    # -- derived incidence ------------------------------------------------
    def edge_order(self):
        """Edge ids sorted by undirected endpoint pair.

        This ordering makes each node's ascending-variable block coincide
        with its neighbors sorted ascending, fixing one coordinate
        convention for both the coupling and the constraint sets.
        """
        return sorted(range(len(self.edges)), key=lambda e: tuple(sorted(self.edges[e])))

    def incident(self, i: int):
        """(variable position list built upstream) edge ids touching node i, canonical order."""
        return [e for e in self.edge_order() if i in self.edges[e]]

    def out_edges(self, i: int):
        return [e for e in self.incident(i) if self.edges[e][0] == i]


def _conservation_rhs(instance: FlowInstance, i: int) -> float:
    if i == instance.source:
        return -instance.injection  # injected flow leaves through the out-edges
    if i == instance.sink:
        return instance.injection  # arriving flow exceeds the relayed flow by U
    return 0.0


def node_set(instance: FlowInstance, i: int):
    """Constraint set of node ``i`` over its incident-edge flows.

    Composite of a conservation hyperplane (incoming minus outgoing flow
    equals 0, or -U at the source, or +U at the sink), the nodal-capacity
    halfspace on the outgoing flows (shifted by the injection at the sink),
    and the per-edge capacity box.  Coordinates follow the canonical
    incident-edge order.
    """
    if not (0 <= i < instance.n_nodes):
        raise ValueError(f"invalid node {i}")
    inc = instance.incident(i)
    if not inc:
        raise ValueError(f"node {i} has no incident edges")
    d = len(inc)
    outgoing = np.asarray([instance.edges[e][0] == i for e in inc])

    a_cons = np.where(outgoing, -1.0, 1.0)
    rhs = _conservation_rhs(instance, i)
    members = [Hyperplane(a_cons, rhs)]

    cap_rhs = float(instance.nodal_capacity[i])
    if i == instance.sink:
        cap_rhs -= instance.injection
    if np.any(outgoing):
        members.append(Halfspace(np.where(outgoing, 1.0, 0.0), cap_rhs))
    elif cap_rhs < 0:
        # constant constraint with an empty outgoing sum: the set is empty
        raise ValueError(
            f"node {i}: injection exceeds nodal capacity and no outgoing edges exist"
        )

    caps = np.asarray([instance.edge_capacity[e] for e in inc])
    members.append(Box(np.zeros(d), caps))
    return Composite(tuple(members))


def build_cfp(instance: FlowInstance):
    """Coupling and per-node sets for the edge-flow consensus problem.

    One global variable per edge; node ``i`` owns the variables of its
    incident edges, so every variable is shared by exactly its two
    endpoints.
    """
    order = instance.edge_order()
    var_of_edge = {e: pos for pos, e in enumerate(order)}
    J = []
    for i in range(instance.n_nodes):
        J.append({var_of_edge[e] for e in instance.incident(i)})
    coupling = build_coupling(J, len(instance.edges))
    sets = tuple(node_set(instance, i) for i in range(instance.n_nodes))
    return coupling, sets


def maxflow_feasible(instance: FlowInstance):
    """Exact feasibility verdict via node-splitting max-flow.

    Every node i becomes (i_in, i_out) joined by an internal arc carrying
    its nodal capacity (at the sink: capacity minus the injection, since the
    consumed flow also counts against it); each directed edge becomes an arc
    between the split copies.  Feasible iff the max flow from the source's
    in-copy to the sink's in-copy reaches the injection, and the injection
    fits the sink's nodal capacity.

    Returns ``(feasible, max_throughput)``.
    """
    g = nx.DiGraph()

    def node_in(i):
        return ("in", i)

    def node_out(i):
        return ("out", i)

    for i in range(instance.n_nodes):
        cap = float(instance.nodal_capacity[i])
        if i == instance.sink:
            cap = max(cap - instance.injection, 0.0)
        g.add_edge(node_in(i), node_out(i), capacity=cap)
    for e, (a, b) in enumerate(instance.edges):
        g.add_edge(node_out(a), node_in(b), capacity=float(instance.edge_capacity[e]))

    src, dst = node_in(instance.source), node_in(instance.sink)
    if dst not in g or src not in g or not nx.has_path(g, src, dst):
        throughput = 0.0
    else:
        throughput, _ = nx.maximum_flow(g, src, dst)
        throughput = float(throughput)
    feasible = (
        throughput >= instance.injection - 1e-9
        and instance.injection <= float(instance.nodal_capacity[instance.sink]) + 1e-9
    )
    return feasible, throughput


def _out_degrees(n_nodes: int, edges) -> np.ndarray:
    deg = np.zeros(n_nodes, dtype=np.intp)
    for a, _ in edges:
        deg[a] += 1
    return deg


def _instance_for(n_nodes, edges, source, sink, injection, cbar, trace):
    out_deg = _out_degrees(n_nodes, edges)
    return FlowInstance(
        n_nodes=n_nodes,
        edges=tuple(edges),
        edge_capacity=np.full(len(edges), float(cbar)),
        nodal_capacity=out_deg * (float(cbar) / 2.0),
        source=source,
        sink=sink,
        injection=float(injection),
        metadata={"calibration": list(trace)},
    )


def calibrate_feasible(
    n_nodes: int,
    edges,
    source: int,
    sink: int,
    *,
    injection0: float = 100.0,
    cbar0: float = 10.0,
    max_rounds: int = 64,
) -> FlowInstance:
    """Shrink the injection / grow the capacities until the flow fits.

    Starts from ``U = injection0``, uniform edge capacity ``cbar0`` and nodal
    capacities of half the capacity per outgoing edge.  While infeasible:
    halve U; if still infeasible, double the edge capacity (re-deriving the
    nodal capacities from it) and test again.
    """
    U, cbar = float(injection0), float(cbar0)
    trace = [(U, cbar)]
    inst = _instance_for(n_nodes, edges, source, sink, U, cbar, trace)
    if maxflow_feasible(inst)[0]:
        return inst
    for _ in range(max_rounds):
        U /= 2.0
        trace.append((U, cbar))
        inst = _instance_for(n_nodes, edges, source, sink, U, cbar, trace)
        if maxflow_feasible(inst)[0]:
            return inst
        cbar *= 2.0
        trace.append((U, cbar))
        inst = _instance_for(n_nodes, edges, source, sink, U, cbar, trace)
        if maxflow_feasible(inst)[0]:
            return inst
    raise CalibrationDivergedError(
        f"no feasible instance within {max_rounds} rounds (is the sink reachable?)"
    )


def calibrate_infeasible(
    n_nodes: int,
    edges,
    source: int,
    sink: int,
    *,
    injection0: float = 100.0,
    cbar0: float = 10.0,
    max_rounds: int = 64,
) -> FlowInstance:
    """Grow the injection / shrink the capacities past the network's ability.

    Mirror image of :func:`calibrate_feasible`: while feasible, double U; if
    still feasible, halve the edge capacity (re-deriving nodal capacities)
    and test again.
    """
    U, cbar = float(injection0), float(cbar0)
    trace = [(U, cbar)]
    inst = _instance_for(n_nodes, edges, source, sink, U, cbar, trace)
    if not maxflow_feasible(inst)[0]:
        return inst
    for _ in range(max_rounds):
        U *= 2.0
        trace.append((U, cbar))
        inst = _instance_for(n_nodes, edges, source, sink, U, cbar, trace)
        if not maxflow_feasible(inst)[0]:
            return inst
        cbar /= 2.0
        trace.append((U, cbar))
        inst = _instance_for(n_nodes, edges, source, sink, U, cbar, trace)
        if not maxflow_feasible(inst)[0]:
            return inst
    raise CalibrationDivergedError(
        f"no infeasible instance within {max_rounds} rounds"
    )


def locally_projectable(instance: FlowInstance) -> bool:
    """Whether every node's own constraint set is nonempty.

    Interior nodes always admit the zero flow.  The source needs the
    injection to fit its nodal capacity and total outgoing edge capacity;
    the sink needs it to fit its nodal capacity and total incoming edge
    capacity.  Instances failing this cannot be run through the projection
    solvers (there is nothing to project onto), even though the max-flow
    oracle still grades them.
    """
    u, o, U = instance.source, instance.sink, instance.injection
    out_cap = sum(instance.edge_capacity[e] for e in instance.out_edges(u))
    in_cap = sum(
        instance.edge_capacity[e]
        for e in instance.incident(o)
        if instance.edges[e][1] == o
    )
    return (
        U <= instance.nodal_capacity[u]
        and U <= out_cap
        and U <= instance.nodal_capacity[o]
        and U <= in_cap
    )


def calibrate_infeasible_projectable(
    n_nodes: int,
    edges,
    source: int,
    sink: int,
    *,
    margin: float = 1.25,
    cbar: float = 10.0,
) -> FlowInstance:
    """An infeasible instance every projection solver can actually run.

    The plain infeasible calibration usually lands where the source's or
    sink's own constraint set is empty (the terminals' nodal capacities are
    proportional to their out-degrees, and the sink has few out-edges), and
    an empty local set has no projection.  Here the terminals get generous
    capacities so the bottleneck is forced into the interior; the injection
    is then set ``margin`` times past the measured interior throughput.
    The result is infeasible through the coupling alone, with every local
    set nonempty.
    """
    if margin <= 1.0:
        raise ValueError("margin must exceed 1")

    def build(injection: float, big: float) -> FlowInstance:
        terminals = {source, sink}
        caps = np.full(len(edges), float(cbar))
        for e, (a, b) in enumerate(edges):
            # widen terminal-to-interior edges only: a direct source-sink
            # edge stays at the base capacity or it would bypass the interior
            if (a in terminals) != (b in terminals):
                caps[e] = big
        nodal = _out_degrees(n_nodes, edges) * (float(cbar) / 2.0)
        nodal = nodal.astype(np.float64)
        nodal[source] = big
        nodal[sink] = big
        return FlowInstance(
            n_nodes=n_nodes,
            edges=tuple(edges),
            edge_capacity=caps,
            nodal_capacity=nodal,
            source=source,
            sink=sink,
            injection=float(injection),
            metadata={"calibration": [("interior-bottleneck", float(injection), float(cbar))]},
        )

    probe = build(injection=1.0, big=1e9)
    _, throughput = maxflow_feasible(probe)
    if throughput <= 0:
        raise CalibrationDivergedError("sink unreachable; no interior throughput")
    injection = margin * throughput
    inst = build(injection=injection, big=4.0 * injection)
    feasible, _ = maxflow_feasible(inst)
    if feasible or not locally_projectable(inst):
        raise CalibrationDivergedError(
            "could not place the bottleneck in the interior for this graph"
        )
    return inst
