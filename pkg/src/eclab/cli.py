"""Command-line front door: ``eclab run`` and ``eclab chtlab``.

Exit codes: 0 all checks satisfied, 1 some check violated, 2 some check
inconclusive, 64 bad usage or configuration, 65 exhausted budget.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import chtlab
from .checks import measure_delivery_steps, run_check
from .errors import BudgetExceeded, ConfigError
from .scenario import bundled_names, load_scenario
from .sim import admissibility_report, run_simulation
from .stacks import PROTOCOL_STACKS, get_stack
from .tracefmt import format_trace
from .verdict import exit_code

EXIT_USAGE = 64
EXIT_BUDGET = 65
CHECKS = ("all", "etob", "tob", "causal", "ec", "eic", "latency")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _budget(text: str) -> int:
    value = int(text)
    if not 1 <= value <= chtlab.MAX_BUDGET:
        raise argparse.ArgumentTypeError(f"must be between 1 and {chtlab.MAX_BUDGET}")
    return value


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eclab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate a protocol stack and check its properties")
    run.add_argument("--scenario", action="append", required=True,
                     help="TOML path or bundled name; repeat to run several")
    run.add_argument("--stack", required=True, choices=PROTOCOL_STACKS)
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--horizon", type=int, help="override the scenario horizon")
    run.add_argument("--check", default="all", choices=CHECKS)
    run.add_argument("--trace-out", type=Path, help="trace file (a directory when running several scenarios)")
    run.add_argument("--report-out", type=Path, help="JSON report (a directory when running several scenarios)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for several scenarios")

    cht = sub.add_parser("chtlab", help="build a detector DAG, its simulation tree and valency tags")
    cht.add_argument("--n", type=int, default=2)
    cht.add_argument("--depth", type=_nonneg, default=4)
    cht.add_argument("--max-k", type=_nonneg, default=1)
    cht.add_argument("--max-vertices", type=_budget, default=200_000)
    cht.add_argument("--queries", type=int, default=4, help="detector samples per process")
    cht.add_argument("--omega", default="disagreeing", choices=("disagreeing", "constant", "seeded"))
    cht.add_argument("--seed", type=int, default=0)
    cht.add_argument("--dump-edges", type=Path, help="write the DAG as an edge list")
    cht.add_argument("--report-out", type=Path)

    sub.add_parser("scenarios", help="list bundled scenarios")
    return parser


# -- run -----------------------------------------------------------------------------


def _checks_for(stack: str, check: str) -> tuple[str, ...]:
    spec = get_stack(stack)
    if check == "all":
        return spec.default_checks
    if check not in spec.suites:
        raise ConfigError(f"check {check!r} does not apply to stack {stack!r} (choose from {list(spec.suites)})")
    return (check,)


def _latency_table(trace) -> dict:
    rows = measure_delivery_steps(trace)
    done = [r for r in rows if r["hops"] is not None]
    return {
        "rows": rows,
        "stably_delivered": len(done),
        "pending": len(rows) - len(done),
        "max_hops": max((r["hops"] for r in done), default=None),
        "max_cross_hops": max((r["cross_hops"] for r in done), default=None),
        "max_latency": max((r["latency"] for r in done), default=None),
    }


def execute_run(scenario_ref: str, stack: str, seed: int | None, horizon: int | None, check: str):
    """Run one scenario; returns (trace text, report dict, exit code)."""
    scenario = load_scenario(scenario_ref)
    if horizon is not None:
        scenario = dataclasses.replace(scenario, horizon=horizon)
    checks = _checks_for(stack, check)
    trace = run_simulation(scenario, stack, seed)
    verdicts = [run_check(trace, name) for name in checks]
    report = {
        "scenario": trace.scenario.name,
        "stack": stack,
        "seed": trace.seed,
        "n": scenario.n,
        "horizon": scenario.horizon,
        "admissibility": admissibility_report(trace),
        "verdicts": [v.to_dict() for v in verdicts],
    }
    if get_stack(stack).tracks_hops:
        report["latency"] = _latency_table(trace)
    code = exit_code(verdicts)
    report["exit_code"] = code
    return format_trace(trace), report, code


def _summary(report: dict) -> list[str]:
    lines = [f"{report['scenario']} stack={report['stack']} seed={report['seed']} "
             f"n={report['n']} horizon={report['horizon']}"]
    for v in report["verdicts"]:
        wit = f" witness={v['witness']}" if "witness" in v else ""
        lines.append(f"  {v['name']}: {v['status']}{wit}")
        for c in v.get("clauses", []):
            if c["status"] != "satisfied" or "witness" in c:
                cw = f" witness={c['witness']}" if "witness" in c else ""
                ev = f" {json.dumps(c['counterexample'], sort_keys=True)}" if c["status"] != "satisfied" else ""
                lines.append(f"    {c['name']}: {c['status']}{cw}{ev}")
        if "clauses" not in v and "counterexample" in v and v["status"] != "satisfied":
            lines.append(f"    {json.dumps(v['counterexample'], sort_keys=True)}")
    lat = report.get("latency")
    if lat:
        lines.append(f"  latency: stably_delivered={lat['stably_delivered']} pending={lat['pending']} "
                     f"max_hops={lat['max_hops']} max_cross_hops={lat['max_cross_hops']} "
                     f"max_latency={lat['max_latency']}")
    adm = report["admissibility"]
    lines.append(f"  admissible: fair_steps={adm['fair_steps']} all_deliveries_met={adm['all_deliveries_met']}")
    return lines


def _run_job(job):
    return execute_run(*job)


def cmd_run(args) -> int:
    jobs = [(ref, args.stack, args.seed, args.horizon, args.check) for ref in args.scenario]
    several = len(jobs) > 1
    if several:
        for out in (args.trace_out, args.report_out):
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
    # Fail fast on configuration problems before spawning workers.
    for ref in args.scenario:
        load_scenario(ref)
    _checks_for(args.stack, args.check)
    if args.jobs > 1 and several:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]
    codes = []
    for (ref, *_), (trace_text, report, code) in zip(jobs, results):
        stem = f"{report['scenario']}-{args.stack}-{report['seed']}"
        if args.trace_out is not None:
            path = args.trace_out / f"{stem}.trace" if several else args.trace_out
            path.write_text(trace_text)
        if args.report_out is not None:
            path = args.report_out / f"{stem}.json" if several else args.report_out
            path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
        print("\n".join(_summary(report)))
        codes.append(code)
    return max(codes, key=lambda c: {0: 0, 2: 1, 1: 2}[c])


# -- chtlab --------------------------------------------------------------------------


def execute_chtlab(args) -> tuple[list[str], dict, int]:
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    if args.queries < 1:
        raise ConfigError("--queries must be at least 1")
    scenario = chtlab.dag_scenario(max(args.n, 2), args.queries, args.omega, seed=args.seed)
    if args.n == 1:
        # a lone process: the second slot crashes before doing anything
        scenario = dataclasses.replace(scenario, crash_time={2: 0})
    build = chtlab.build_fd_dag(scenario, args.queries)
    owner = min(build.failure_pattern.correct)
    G = build.dags[owner]
    props = chtlab.check_dag_properties(G, build.failure_pattern, build.history, build.times, build.snapshots[owner])
    lines = [f"dag: scenario={scenario.name} n={scenario.n} queries={args.queries} owner=p{owner} "
             f"vertices={len(G.vertices)} edges={len(G.edges)}"]
    lines.append(f"dag-properties: {props.status}")
    for c in props.clauses:
        ev = f" {json.dumps(c.counterexample, sort_keys=True)}" if c.counterexample else ""
        lines.append(f"  {c.name}: {c.status}{ev}")
    report = {"dag": {"owner": owner, "vertices": len(G.vertices), "edges": len(G.edges),
                      "properties": props.to_dict()}}

    tree = chtlab.build_simulation_tree(G, scenario.n, args.depth, max_instance=max(args.max_k, 1),
                                        max_vertices=args.max_vertices)
    lines.append(f"tree: depth={args.depth} vertices={len(tree.nodes)} max_instance={tree.max_instance}")
    tags = {k: chtlab.compute_k_tags(tree, k) for k in range(1, args.max_k + 1)}
    report["tree"] = {"depth": args.depth, "vertices": len(tree.nodes), "tags": {}}
    for k, tk in tags.items():
        hist = chtlab.tag_histogram(tk)
        report["tree"]["tags"][str(k)] = hist
        lines.append(f"tags k={k}: " + " ".join(f"{name}={count}" for name, count in hist.items()))
        settled = chtlab.settled_bivalent(tree, tk, k)
        first = tree.pretty(settled[0]) if settled else "-"
        report["tree"].setdefault("settled_bivalent", {})[str(k)] = {"count": len(settled), "first": first}
        lines.append(f"settled-bivalent k={k}: count={len(settled)} first={first}")
    found = chtlab.locate_k_bivalent(tree, args.max_k, tags)
    if found is None:
        lines.append("bivalent: none within bounds")
        report["bivalent"] = None
    else:
        i, k = found
        node = tree.nodes[i]
        lines.append(f"bivalent: k={k} vertex={i} depth={node.depth} schedule={tree.pretty(i)}")
        report["bivalent"] = {"k": k, "vertex": i, "depth": node.depth, "schedule": tree.pretty(i)}
    if args.dump_edges is not None:
        args.dump_edges.write_text(G.edge_list())
    code = 1 if any(c.status == "violated" for c in props.clauses) else 0
    return lines, report, code


def cmd_chtlab(args) -> int:
    lines, report, code = execute_chtlab(args)
    print("\n".join(lines))
    if args.report_out is not None:
        args.report_out.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "scenarios":
            print("\n".join(bundled_names()))
            return 0
        if args.command == "run":
            return cmd_run(args)
        return cmd_chtlab(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, OSError) as exc:
        print(f"eclab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"eclab: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
