"""Command-line front end: generate instances, solve, benchmark, oracle-check.

Exit codes are a stable contract::

    0  feasible verdict
    2  infeasible verdict
    3  graph generation or calibration failure
    4  iteration budget exhausted without a verdict
    5  instance file unreadable or malformed
    6  solver numeric failure (e.g. a projection that cannot converge)
    64 command-line usage error

Instances are JSON documents; traces and benchmark summaries are CSV with
floats written as their shortest round-trip decimal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import flowprob, graphgen
from .flowprob import FlowInstance
from .solvers import ALGORITHMS, FeasibilityProblem, SolveStatus, SolverConfig, solve
from .sets import CompositeNoConvergeError

EXIT_FEASIBLE = 0
EXIT_INFEASIBLE = 2
EXIT_GENERATION = 3
EXIT_MAXITER = 4
EXIT_PARSE = 5
EXIT_NUMERIC = 6
EXIT_USAGE = 64

TRACE_HEADER = ["k", "objective", "T_v", "max_local_rc", "messages_cum"]
BENCH_HEADER = ["instance", "algorithm", "status", "iterations", "total_messages", "wall_time_s"]


class _Parser(argparse.ArgumentParser):
    # argparse's default usage-error exit code is 2, which collides with the
    # infeasible verdict; route usage errors to their own code
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def instance_to_dict(inst: FlowInstance) -> dict:
    return {
        "nodes": inst.n_nodes,
        "edges": [
            {"from": a, "to": b, "capacity": float(c)}
            for (a, b), c in zip(inst.edges, inst.edge_capacity)
        ],
        "nodal_capacities": [float(x) for x in inst.nodal_capacity],
        "source": inst.source,
        "sink": inst.sink,
        "injection": float(inst.injection),
        "metadata": inst.metadata,
    }


def instance_from_dict(doc: dict) -> FlowInstance:
    try:
        edges = tuple((int(e["from"]), int(e["to"])) for e in doc["edges"])
        caps = np.asarray([float(e["capacity"]) for e in doc["edges"]])
        return FlowInstance(
            n_nodes=int(doc["nodes"]),
            edges=edges,
            edge_capacity=caps,
            nodal_capacity=np.asarray([float(x) for x in doc["nodal_capacities"]]),
            source=int(doc["source"]),
            sink=int(doc["sink"]),
            injection=float(doc["injection"]),
            metadata=dict(doc.get("metadata", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed instance document: {exc}") from exc


def write_instance(inst: FlowInstance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(inst), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_instance(path: str) -> FlowInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace_csv(report, path: str) -> None:
    lines = [",".join(TRACE_HEADER)]
    cum = report.total_messages - sum(t.messages for t in report.trace)  # setup rounds
    for t in report.trace:
        cum += t.messages
        rc = float(np.max(t.per_agent_rc))
        lines.append(
            f"{t.k},{_fmt(t.objective)},{_fmt(t.t_v)},{_fmt(rc)},{cum}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _default_seed(args_seed) -> int:
    if args_seed is not None:
        return args_seed
    return int(os.environ.get("CFP_SPLIT_SEED", "0"))


def cmd_gen(args) -> int:
    seed = _default_seed(args.seed)
    try:
        adj = graphgen.generate_graph(args.nodes, seed=seed, edge_prob=args.edge_prob)
        edges = graphgen.directed_edges(adj)
        source, sink = graphgen.pick_source_sink(adj)
        if args.infeasible:
            inst = flowprob.calibrate_infeasible_projectable(
                args.nodes, edges, source, sink, margin=args.margin
            )
        else:
            inst = flowprob.calibrate_feasible(args.nodes, edges, source, sink)
    except (ValueError, graphgen.GenerationFailedError, flowprob.CalibrationDivergedError) as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    meta = dict(inst.metadata)
    meta.update(
        {
            "seed": seed,
            "nodes": args.nodes,
            "edge_prob": args.edge_prob,
            "mode": "infeasible" if args.infeasible else "feasible",
        }
    )
    inst = FlowInstance(
        n_nodes=inst.n_nodes,
        edges=inst.edges,
        edge_capacity=inst.edge_capacity,
        nodal_capacity=inst.nodal_capacity,
        source=inst.source,
        sink=inst.sink,
        injection=inst.injection,
        metadata=meta,
    )
    write_instance(inst, args.out)
    print(f"wrote {args.out}")
    return EXIT_FEASIBLE


def _config_from_args(args) -> SolverConfig:
    return SolverConfig(
        algorithm=args.alg,
        gamma=args.gamma,
        lam=args.lam,
        theta0=args.theta0,
        mu1=args.mu,
        mu2=args.mu,
        max_iter=args.max_iter,
        rc_threshold=args.rc_threshold,
        feas_tol=args.feas_tol,
    )


def _status_exit(status: SolveStatus) -> int:
    return {
        SolveStatus.FEASIBLE: EXIT_FEASIBLE,
        SolveStatus.INFEASIBLE: EXIT_INFEASIBLE,
        SolveStatus.MAX_ITER: EXIT_MAXITER,
    }[status]


def cmd_solve(args) -> int:
    try:
        inst = read_instance(args.infile)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot read instance: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        problem = FeasibilityProblem(*flowprob.build_cfp(inst))
        report = solve(problem, _config_from_args(args))
    except (CompositeNoConvergeError, FloatingPointError, ValueError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.trace:
        write_trace_csv(report, args.trace)
    print(
        f"{report.status.value} after {report.iterations} iterations, "
        f"{report.total_messages} messages"
    )
    return _status_exit(report.status)


def cmd_oracle(args) -> int:
    try:
        inst = read_instance(args.infile)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot read instance: {exc}", file=sys.stderr)
        return EXIT_PARSE
    feasible, throughput = flowprob.maxflow_feasible(inst)
    print(f"{'feasible' if feasible else 'infeasible'} {_fmt(throughput)}")
    return EXIT_FEASIBLE if feasible else EXIT_INFEASIBLE


def cmd_bench(args) -> int:
    if not os.path.isdir(args.instances):
        print(f"not a directory: {args.instances}", file=sys.stderr)
        return EXIT_PARSE
    algs = [a.strip() for a in args.algs.split(",") if a.strip()]
    for a in algs:
        if a not in ALGORITHMS:
            print(f"unknown algorithm {a!r}", file=sys.stderr)
            return EXIT_USAGE
    files = sorted(
        f for f in os.listdir(args.instances) if f.endswith(".json")
    )
    if not files:
        print("no instance files found", file=sys.stderr)
        return EXIT_PARSE
    out_dir = os.path.dirname(os.path.abspath(args.out))
    trace_dir = args.trace_dir or os.path.join(out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)

    rows = []
    for fname in files:
        path = os.path.join(args.instances, fname)
        name = os.path.splitext(fname)[0]
        try:
            inst = read_instance(path)
            problem = FeasibilityProblem(*flowprob.build_cfp(inst))
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            for alg in algs:
                rows.append([name, alg, f"error:{exc.__class__.__name__}", 0, 0, _fmt(0.0)])
            continue
        for alg in algs:
            cfg = SolverConfig(algorithm=alg, max_iter=args.max_iter)
            start = time.perf_counter()
            try:
                report = solve(problem, cfg)
            except (CompositeNoConvergeError, FloatingPointError, ValueError) as exc:
                rows.append([name, alg, f"error:{exc.__class__.__name__}", 0, 0, _fmt(0.0)])
                continue
            wall = time.perf_counter() - start
            write_trace_csv(report, os.path.join(trace_dir, f"{name}__{alg}.csv"))
            rows.append(
                [
                    name,
                    alg,
                    report.status.value,
                    report.iterations,
                    report.total_messages,
                    _fmt(round(wall, 6)),
                ]
            )
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(",".join(BENCH_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    print(f"wrote {args.out} ({len(rows)} rows)")
    return EXIT_FEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfpsplit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a calibrated flow instance")
    p_gen.add_argument("--nodes", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=None,
                       help="default: $CFP_SPLIT_SEED or 0")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--edge-prob", type=float, default=0.2)
    p_gen.add_argument("--margin", type=float, default=1.1,
                       help="infeasibility margin over the interior throughput")
    mode = p_gen.add_mutually_exclusive_group()
    mode.add_argument("--feasible", action="store_true", default=True)
    mode.add_argument("--infeasible", dest="infeasible", action="store_true", default=False)
    p_gen.set_defaults(func=cmd_gen)

    p_solve = sub.add_parser("solve", help="run one solver on an instance file")
    p_solve.add_argument("--in", dest="infile", required=True)
    p_solve.add_argument("--alg", choices=ALGORITHMS, default="afb")
    p_solve.add_argument("--max-iter", type=int, default=10_000)
    p_solve.add_argument("--rc-threshold", type=float, default=1e-4)
    p_solve.add_argument("--feas-tol", type=float, default=1e-6)
    p_solve.add_argument("--gamma", type=float, default=1.0)
    p_solve.add_argument("--lam", type=float, default=1.0)
    p_solve.add_argument("--theta0", type=float, default=1.0)
    p_solve.add_argument("--mu", type=float, default=1.0)
    p_solve.add_argument("--trace", default=None, help="write per-iteration CSV here")
    p_solve.set_defaults(func=cmd_solve)

    p_oracle = sub.add_parser("oracle", help="exact max-flow feasibility verdict")
    p_oracle.add_argument("--in", dest="infile", required=True)
    p_oracle.set_defaults(func=cmd_oracle)

    p_bench = sub.add_parser("bench", help="run solvers over a directory of instances")
    p_bench.add_argument("--instances", required=True)
    p_bench.add_argument("--algs", default=",".join(ALGORITHMS))
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--max-iter", type=int, default=10_000)
    p_bench.add_argument("--trace-dir", default=None)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
