"""Bounded versions of the detector-sample DAG, simulation trees and valency tags.

A DAG vertex ``(q, d, k)`` says that process ``q`` saw detector value ``d``
at its k-th query; an edge says one sample was taken before another.
Simulation trees enumerate every schedule of an eventual-consensus
algorithm that follows a path of the DAG: the i-th step is taken by the
process of the path's i-th vertex, with that vertex's detector value, and
either consumes a pending message addressed to it or is an empty step.
Processes invoke instance 1 at their first step and instance l+1 right
after deciding l; each invocation branches over the proposal values of an
input policy.

Everything is exhaustive within explicit budgets; running out of budget
raises ``BudgetExceeded`` instead of truncating.
"""

from __future__ import annotations

import dataclasses
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable

from .ec import EcState, ec_handle_promote, ec_propose, ec_timeout_decide, fmt_value
from .errors import BudgetExceeded
from .oracles import FdHistory
from .scenario import FailurePattern, OmegaSpec, Scenario
from .sim import run_simulation
from .stacks import StackSpec
from .verdict import INCONCLUSIVE, SATISFIED, VIOLATED, Verdict, combine

Vertex = tuple[int, Any, int]
BOT = "bot"

# Hard ceiling for any tree budget; larger requests are configuration errors.
MAX_BUDGET = 10_000_000


def fmt_vertex(v: Vertex) -> str:
    return f"[p{v[0]},{v[1]},{v[2]}]"


# -- DAG ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FdDag:
    vertices: frozenset = frozenset()
    edges: frozenset = frozenset()

    @cached_property
    def _succ(self) -> dict:
        out = {v: [] for v in self.vertices}
        for a, b in self.edges:
            out[a].append(b)
        return {v: sorted(ws) for v, ws in out.items()}

    def successors(self, v: Vertex) -> list[Vertex]:
        return self._succ[v]

    def sorted_vertices(self) -> list[Vertex]:
        return sorted(self.vertices)

    def edge_list(self) -> str:
        """Edge-list text: one ``src dst`` line per edge, then isolated vertices alone."""
        lines = [f"{fmt_vertex(a)} {fmt_vertex(b)}" for a, b in sorted(self.edges)]
        touched = {v for e in self.edges for v in e}
        lines += [fmt_vertex(v) for v in self.sorted_vertices() if v not in touched]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class DagMsg:
    dag: FdDag

    def wire(self) -> str:
        verts = ",".join(fmt_vertex(v) for v in self.dag.sorted_vertices())
        return f"dag{{vertices=[{verts}] edges={len(self.dag.edges)}}}"

    def carries(self):
        return ()


class FdDagNode:
    """The communication task: merge, query, add a vertex after everything known, share."""

    def __init__(self, pid: int, n: int, queries: int, exchange: bool, query_on_receive: bool):
        self.pid = pid
        self.n = n
        self.queries = queries
        self.exchange = exchange
        self.query_on_receive = query_on_receive
        self.vertices: set = set()
        self.edges: set = set()
        self.k = 0
        self.snapshots: list[tuple[tuple[int, int], FdDag]] = []

    def dag(self) -> FdDag:
        return FdDag(frozenset(self.vertices), frozenset(self.edges))

    def _act(self, ctx, incoming: FdDag | None, query: bool) -> None:
        changed = False
        if incoming is not None and not (incoming.vertices <= self.vertices and incoming.edges <= self.edges):
            self.vertices |= incoming.vertices
            self.edges |= incoming.edges
            changed = True
        if query and self.k < self.queries:
            self.k += 1
            v = (ctx.pid, ctx.fd, self.k)
            self.edges |= {(u, v) for u in self.vertices}
            self.vertices.add(v)
            ctx.output("sample", vertex=v)
            changed = True
            if self.exchange:
                msg = DagMsg(self.dag())
                ctx.send_all((q, msg) for q in range(1, self.n + 1))
        if changed:
            self.snapshots.append(((ctx.tick, ctx.step_index), self.dag()))

    def on_input(self, ctx, op):
        pass

    def on_receive(self, ctx, src, msg):
        self._act(ctx, msg.dag, self.query_on_receive)

    def on_timeout(self, ctx):
        self._act(ctx, None, True)

    def snapshot(self):
        return (self.k, len(self.vertices), len(self.edges))


@dataclass
class DagBuild:
    scenario: Scenario
    dags: dict[int, FdDag]
    snapshots: dict[int, list[tuple[tuple[int, int], FdDag]]]
    times: dict[Vertex, tuple[int, int]]
    failure_pattern: FailurePattern
    history: FdHistory


def build_fd_dag(scenario: Scenario, queries: int, exchange: bool = True, seed: int | None = None,
                 horizon: int | None = None, query_on_receive: bool = False) -> DagBuild:
    """Run the communication task with at most ``queries`` samples per process.

    By default a process queries only on its timer steps and merely merges
    on receipt; the merged vertices then precede its next sample. With
    ``query_on_receive`` every step queries, which spends a small query
    budget on the process's own echoes before anything else arrives.
    """
    if horizon is not None:
        scenario = dataclasses.replace(scenario, horizon=horizon)
    spec = StackSpec(
        "fd-dag",
        lambda pid, sc, s: FdDagNode(pid, sc.n, queries, exchange, query_on_receive),
        lambda sc, s: [],
        suites=(),
        default_checks=(),
    )
    trace = run_simulation(scenario, spec, seed)
    times = {r.data["vertex"]: (r.time, r.step) for r in trace.outputs_of("sample")}
    nodes = trace.nodes
    return DagBuild(
        scenario=trace.scenario,
        dags={p: node.dag() for p, node in nodes.items()},
        snapshots={p: list(node.snapshots) for p, node in nodes.items()},
        times=times,
        failure_pattern=trace.failure_pattern,
        history=trace.fd_history,
    )


def check_dag_properties(G: FdDag, F: FailurePattern, H: FdHistory, times: dict,
                         snapshots=None, until: int | None = None) -> Verdict:
    """Constructive properties (1a), (1b), (2), (3) exactly; (4) within the recorded run.

    For (4), each snapshot taken at tick <= ``until`` (default: all) must be
    followed, in ``G``, by a vertex of every correct process that succeeds
    all of the snapshot's vertices. Missing followers make (4) inconclusive,
    since a longer run could still supply them.
    """
    clauses = []
    bad = None
    for v in sorted(G.vertices):
        q, d, k = v
        t = times.get(v)
        if t is None:
            bad = {"vertex": fmt_vertex(v), "why": "no recorded time"}
        elif not F.alive(q, t[0]):
            bad = {"vertex": fmt_vertex(v), "tick": t[0], "why": "sampled by a crashed process"}
        elif H.samples.get((q, t[0])) != d:
            bad = {"vertex": fmt_vertex(v), "tick": t[0], "why": f"history says {H.samples.get((q, t[0]))}"}
        if bad:
            break
    clauses.append(Verdict("1a-sampled-value", VIOLATED if bad else SATISFIED, counterexample=bad))

    bad = None
    for a, b in sorted(G.edges):
        if not times[a] < times[b]:
            bad = {"edge": [fmt_vertex(a), fmt_vertex(b)], "times": [list(times[a]), list(times[b])]}
            break
    clauses.append(Verdict("1b-edge-time-order", VIOLATED if bad else SATISFIED, counterexample=bad))

    bad = None
    by_proc: dict[int, list] = {}
    for v in sorted(G.vertices, key=lambda v: (v[0], v[2])):
        by_proc.setdefault(v[0], []).append(v)
    for q, vs in sorted(by_proc.items()):
        for i, a in enumerate(vs):
            for b in vs[i + 1:]:
                if (a, b) not in G.edges:
                    bad = {"missing_edge": [fmt_vertex(a), fmt_vertex(b)]}
                    break
            if bad:
                break
        if bad:
            break
    clauses.append(Verdict("2-same-process-order", VIOLATED if bad else SATISFIED, counterexample=bad))

    bad = None
    for a, b in sorted(G.edges):
        for c in G.successors(b):
            if (a, c) not in G.edges:
                bad = {"missing_edge": [fmt_vertex(a), fmt_vertex(c)], "via": fmt_vertex(b)}
                break
        if bad:
            break
    clauses.append(Verdict("3-transitive", VIOLATED if bad else SATISFIED, counterexample=bad))

    if snapshots is not None:
        clauses.append(_property4(G, F, snapshots, until))
    return combine("fd-dag", clauses)


def _property4(G: FdDag, F: FailurePattern, snapshots, until) -> Verdict:
    checked = 0
    pending = None
    correct = sorted(F.correct)
    for (tick, _), snap in snapshots:
        if until is not None and tick > until:
            continue
        checked += 1
        for q in correct:
            followers = [w for w in G.vertices if w[0] == q and w not in snap.vertices
                         and all((u, w) in G.edges for u in snap.vertices)]
            if not followers:
                pending = pending or {"snapshot_tick": tick, "process": q, "size": len(snap.vertices)}
    status = INCONCLUSIVE if pending else SATISFIED
    ev = dict(pending, checked=checked) if pending else None
    return Verdict("4-eventual-follower", status, counterexample=ev)


# -- simulation trees -----------------------------------------------------------------


class EcOmegaAlgorithm:
    """The leader-based eventual consensus protocol, as a tree-simulation plug-in."""

    name = "ec-omega"

    def initial(self, pid: int, n: int):
        return EcState(pid, n)

    def propose(self, state, instance, value):
        return ec_propose(state, instance, value)

    def receive(self, state, src, body):
        return ec_handle_promote(state, src, body.value, body.instance)

    def timeout(self, state, fd):
        return ec_timeout_decide(state, fd)


def binary_policy(pid: int, instance: int) -> tuple:
    return (0, 1)


@dataclass
class TreeNode:
    index: int
    parent: int
    depth: int
    label: tuple | None  # (dag vertex, (src, wire) or None, proposals made)
    states: tuple
    started: frozenset
    pending: tuple  # sorted ((dst, src, wire), body) entries, a multiset
    decisions: tuple  # sorted (pid, instance, value)
    children: list[int] = field(default_factory=list)

    @property
    def last(self) -> Vertex | None:
        return self.label[0] if self.label else None


@dataclass
class SimTree:
    dag: FdDag
    nodes: list[TreeNode]
    depth_bound: int
    max_instance: int

    def labels(self, i: int) -> tuple:
        out = []
        while i > 0:
            node = self.nodes[i]
            out.append(node.label)
            i = node.parent
        return tuple(reversed(out))

    def path(self, i: int) -> list[Vertex]:
        return [lab[0] for lab in self.labels(i)]

    def index_of(self, labels: tuple) -> int | None:
        return self._by_labels.get(labels)

    @cached_property
    def _by_labels(self) -> dict:
        return {self.labels(i): i for i in range(len(self.nodes))}

    def pretty(self, i: int) -> str:
        parts = []
        for v, msg, props in self.labels(i):
            m = "lambda" if msg is None else f"{msg[1]} from p{msg[0]}"
            p = "".join(f" propose {fmt_value(x)}" for x in props)
            parts.append(f"(p{v[0]}, {m}, d={v[1]}, k={v[2]}{p})")
        return " -> ".join(parts) if parts else "(root)"


def _step(algo, node: TreeNode, v: Vertex, msg, policy, max_instance):
    """All (proposals, states, started, pending, decisions) outcomes of one step."""
    q, d, _ = v
    pending = list(node.pending)
    body = None
    if msg is not None:
        for i, (key, b) in enumerate(pending):
            if key[0] == q and (key[1], key[2]) == msg:
                body = b
                del pending[i]
                break
    starts = [((), node.states[q - 1], [])]
    if q not in node.started:
        starts = []
        for x in policy(q, 1):
            st, sends = algo.propose(node.states[q - 1], 1, x)
            starts.append(((x,), st, sends))
    out = []
    for props, st, sends in starts:
        decision = None
        if body is not None:
            st = algo.receive(st, msg[0], body)
        else:
            st, decision = algo.timeout(st, d)
        finals = [(props, st, sends)]
        if decision and decision[0] < max_instance:
            finals = []
            for x in policy(q, decision[0] + 1):
                st2, more = algo.propose(st, decision[0] + 1, x)
                finals.append((props + (x,), st2, sends + more))
        for props2, st2, sends2 in finals:
            new_pending = pending + [((dst, q, b.wire()), b) for dst, b in sends2]
            new_pending.sort(key=lambda e: e[0])
            states = node.states[: q - 1] + (st2,) + node.states[q:]
            decisions = node.decisions
            if decision:
                decisions = tuple(sorted(decisions + ((q, decision[0], decision[1]),), key=repr))
            out.append((props2, states, node.started | {q}, tuple(new_pending), decisions))
    return out


def build_simulation_tree(G: FdDag, n: int, depth_bound: int, algo=None,
                          input_policy: Callable = binary_policy, max_instance: int = 1,
                          max_vertices: int = 200_000) -> SimTree:
    """Every schedule of length <= ``depth_bound`` compatible with a path of ``G``."""
    algo = algo or EcOmegaAlgorithm()
    if max_vertices > MAX_BUDGET:
        raise ValueError(f"vertex budget above {MAX_BUDGET}")
    root = TreeNode(0, -1, 0, None, tuple(algo.initial(p, n) for p in range(1, n + 1)),
                    frozenset(), (), ())
    nodes = [root]
    frontier = [0]
    for depth in range(1, depth_bound + 1):
        nxt = []
        for i in frontier:
            node = nodes[i]
            succ = G.sorted_vertices() if node.last is None else G.successors(node.last)
            for v in succ:
                q = v[0]
                msgs = sorted({(key[1], key[2]) for key, _ in node.pending if key[0] == q})
                for msg in [None] + msgs:
                    for props, states, started, pending, decisions in _step(
                            algo, node, v, msg, input_policy, max_instance):
                        child = TreeNode(len(nodes), i, depth, (v, msg, props), states, started, pending, decisions)
                        nodes.append(child)
                        node.children.append(child.index)
                        nxt.append(child.index)
                        if len(nodes) > max_vertices:
                            raise BudgetExceeded("tree vertex", max_vertices)
        frontier = nxt
    return SimTree(G, nodes, depth_bound, max_instance)


def count_schedules(G: FdDag, n: int, depth_bound: int, input_policy: Callable = binary_policy,
                    max_instance: int = 1) -> int:
    """Independent recursive count of the tree's vertices (root included).

    Walks schedules with plain mutable state instead of the tree's
    immutable nodes; used to cross-check ``build_simulation_tree``.
    """

    def walk(states, started, pending, last, depth):
        total = 1
        if depth == depth_bound:
            return total
        succ = sorted(G.vertices) if last is None else sorted(w for (a, w) in G.edges if a == last)
        for v in succ:
            q, d, _ = v
            choices = [None] + sorted({(src, body.wire()) for (dst, src, body) in pending if dst == q})
            for choice in choices:
                rest = list(pending)
                body = None
                if choice is not None:
                    j = next(j for j, (dst, src, b) in enumerate(rest)
                             if dst == q and (src, b.wire()) == choice)
                    body = rest.pop(j)[2]
                for x in (input_policy(q, 1) if q not in started else [None]):
                    st = states[q]
                    out = []
                    if x is not None:
                        st, sends = ec_propose(st, 1, x)
                        out += sends
                    dec = None
                    if body is not None:
                        st = ec_handle_promote(st, choice[0], body.value, body.instance)
                    else:
                        st, dec = ec_timeout_decide(st, d)
                    nexts = [(st, out)]
                    if dec and dec[0] < max_instance:
                        nexts = []
                        for y in input_policy(q, dec[0] + 1):
                            st2, more = ec_propose(st, dec[0] + 1, y)
                            nexts.append((st2, out + more))
                    for st2, sent in nexts:
                        states2 = dict(states)
                        states2[q] = st2
                        pend2 = rest + [(dst, q, b) for dst, b in sent]
                        total += walk(states2, started | {q}, pend2, v, depth + 1)
        return total

    return walk({p: EcState(p, n) for p in range(1, n + 1)}, frozenset(), [], None, 0)


# -- valency tags -------------------------------------------------------------------------


def _enabled(decisions, k: int) -> bool:
    return k == 1 or any(inst == k - 1 for _, inst, _ in decisions)


def compute_k_tags(tree: SimTree, k: int) -> list[frozenset]:
    """k-tag of every vertex, by one post-order pass over the tree."""
    size = len(tree.nodes)
    vals: list[set] = [set() for _ in range(size)]
    bot = [False] * size
    for i in range(size - 1, -1, -1):  # children always have larger indices
        node = tree.nodes[i]
        mine = {x for _, inst, x in node.decisions if inst == k}
        vals[i] |= mine
        bot[i] = bot[i] or len(mine) > 1
        for c in node.children:
            vals[i] |= vals[c]
            bot[i] = bot[i] or bot[c]
    tags = []
    for i, node in enumerate(tree.nodes):
        if not _enabled(node.decisions, k):
            tags.append(frozenset())
        else:
            tags.append(frozenset(vals[i] | ({BOT} if bot[i] else set())))
    return tags


def naive_k_tags(tree: SimTree, k: int) -> list[frozenset]:
    """k-tags by rescanning each vertex's whole subtree."""
    tags = []
    for i, node in enumerate(tree.nodes):
        if not _enabled(node.decisions, k):
            tags.append(frozenset())
            continue
        tag = set()
        stack = [i]
        while stack:
            j = stack.pop()
            returned = {x for _, inst, x in tree.nodes[j].decisions if inst == k}
            tag |= returned
            if len(returned) > 1:
                tag.add(BOT)
            stack.extend(tree.nodes[j].children)
        tags.append(frozenset(tag))
    return tags


def is_bivalent(tag: frozenset) -> bool:
    return tag == frozenset({0, 1})


def vertex_order_key(tree: SimTree, i: int):
    """Order consistent with the query index of the last DAG vertex used (root first)."""
    node = tree.nodes[i]
    last = node.last
    m = last[2] if last else 0
    pid = last[0] if last else 0
    return (m, pid, node.depth, repr(tree.labels(i)))


def locate_k_bivalent(tree: SimTree, max_k: int, tags: dict[int, list] | None = None):
    """First ``(vertex index, k)`` whose k-tag is exactly {0, 1}, or None within bounds."""
    if max_k < 1:
        return None
    tags = tags or {k: compute_k_tags(tree, k) for k in range(1, max_k + 1)}
    keyed = []
    for i in range(len(tree.nodes)):
        m, pid, depth, labels = vertex_order_key(tree, i)
        for k in range(1, max_k + 1):
            if is_bivalent(tags[k][i]):
                keyed.append(((m, pid, k, depth, labels), i, k))
    if not keyed:
        return None
    _, i, k = min(keyed)
    return i, k


def tag_histogram(tags: list[frozenset]) -> dict[str, int]:
    def name(tag):
        items = sorted(x for x in tag if x != BOT)
        return "{" + ",".join(map(str, items)) + (",bot" if BOT in tag and items else "bot" if BOT in tag else "") + "}"

    return dict(sorted(Counter(name(t) for t in tags).items()))


# -- canned DAG scenarios ---------------------------------------------------------------


def dag_scenario(n: int, queries: int, omega: str = "disagreeing", seed: int = 0,
                 crash_time: dict | None = None) -> Scenario:
    """Small scenario for DAG building.

    ``disagreeing``: every process trusts itself for the whole run.
    ``constant``: everyone trusts p1 from the start.
    ``seeded``: random leaders until roughly the middle of the run.
    """
    horizon = 4 * queries + 8
    if omega == "disagreeing":
        spec = OmegaSpec(tau=horizon + 1, prestable="self")
    elif omega == "constant":
        spec = OmegaSpec(tau=0)
    elif omega == "seeded":
        spec = OmegaSpec(tau=horizon // 2, prestable="seeded")
    else:
        raise ValueError(f"unknown omega mode {omega!r}")
    return Scenario(n=n, horizon=horizon, delta_c=1, delta_t=1, crash_time=crash_time or {},
                    omega=spec, seed=seed, name=f"{omega}-leaders")


def random_dag_build(rng: random.Random, max_n: int = 3, max_vertices: int = 12) -> DagBuild:
    n = rng.randint(2, max_n)
    queries = rng.randint(1, max_vertices // n)
    sc = dag_scenario(n, queries, rng.choice(["disagreeing", "constant", "seeded"]), seed=rng.randrange(10**6))
    sc = dataclasses.replace(sc, delta_c=rng.randint(1, 2))
    return build_fd_dag(sc, queries, exchange=rng.random() < 0.8)


def proposed_all(node: TreeNode, k: int) -> bool:
    """Every process has invoked instance ``k`` in this vertex's schedule."""
    return all(getattr(st, "count", 0) >= k for st in node.states)


def settled_bivalent(tree: SimTree, tags: list[frozenset], k: int) -> list[int]:
    """k-bivalent vertices in which every process has already proposed to instance k.

    Bivalence there cannot come from undecided inputs; it comes from the
    detector samples along the path.
    """
    return [i for i, node in enumerate(tree.nodes) if is_bivalent(tags[i]) and proposed_all(node, k)]
