"""Deterministic discrete-event simulator.

Time is integer ticks ``0..horizon``. Within a tick, alive processes act in
ascending pid order; each process first takes one receive step per message
arriving this tick (ordered by send tick, then send order), then one step
per application input, then a timer step (the empty-message step that
fires local timeouts) if its timer is due. Timers fire every ``delta_t``
ticks from a seeded per-process phase. Link delays are drawn uniformly
from ``[1, delta_c]``; messages to a process that has crashed by the
arrival tick are dropped.

Everything random flows from one ``random.Random`` seeded by the run seed,
and nothing iterates a hash-ordered container, so a run is a pure function
of (scenario, stack, seed).
"""

from __future__ import annotations

import hashlib
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .oracles import FdHistory, omega_output, sigma_output
from .scenario import FailurePattern, Scenario

RECV, INPUT, TIMER = "recv", "input", "timer"


@dataclass
class Step:
    index: int
    time: int
    pid: int
    via: str
    fd: Any
    digest: str
    received: int | None = None
    sends: tuple[int, ...] = ()


@dataclass
class Message:
    uid: int
    src: int
    dst: int
    sent_at: int
    deliver_at: int
    body: Any
    step: int
    chain: dict | None = None
    received_step: int | None = None
    dropped: bool = False


@dataclass
class Record:
    """An application input (``kind='input'``) or output (``kind='output'``)."""

    kind: str
    time: int
    pid: int
    step: int
    op: str
    data: dict[str, Any]


@dataclass
class Trace:
    scenario: Scenario
    stack: str
    seed: int
    failure_pattern: FailurePattern
    fd_history: FdHistory
    sigma_history: FdHistory | None = None
    steps: list[Step] = field(default_factory=list)
    messages: list[Message] = field(default_factory=list)
    inputs: list[Record] = field(default_factory=list)
    outputs: list[Record] = field(default_factory=list)
    # (kind, payload) in emission order; drives serialization.
    log: list[tuple[str, Any]] = field(default_factory=list)
    # final protocol node objects, for analyses that need internal state
    nodes: dict[int, Any] = field(default_factory=dict, repr=False)

    @property
    def horizon(self) -> int:
        return self.scenario.horizon

    def outputs_of(self, op: str) -> list[Record]:
        return [r for r in self.outputs if r.op == op]

    def inputs_of(self, op: str) -> list[Record]:
        return [r for r in self.inputs if r.op == op]


class StepContext:
    """What a protocol node sees during one step."""

    def __init__(self, sim: "_Run", pid: int, tick: int, fd, step_index: int):
        self._sim = sim
        self.pid = pid
        self.n = sim.scenario.n
        self.tick = tick
        self.fd = fd
        self.step_index = step_index
        self.sent: list[tuple[int, Any]] = []

    def send(self, dst: int, body) -> None:
        self.sent.append((dst, body))

    def send_all(self, pairs) -> None:
        for dst, body in pairs:
            self.sent.append((dst, body))

    def invoke(self, op: str, **data) -> None:
        self._sim.record("input", self, op, data)

    def output(self, op: str, **data) -> None:
        self._sim.record("output", self, op, data)

    def originate(self, mid) -> None:
        """Start hop accounting for a freshly broadcast message."""
        if self._sim.chains is not None:
            self._sim.chains[self.pid][mid] = (0, 0)

    def hops(self, mid):
        """Longest (all hops, cross-process hops) chain from ``mid``'s broadcast to here."""
        if self._sim.chains is None:
            return None
        return self._sim.chains[self.pid].get(mid)


def digest(snapshot) -> str:
    return hashlib.blake2b(repr(snapshot).encode(), digest_size=6).hexdigest()


class _Run:
    def __init__(self, scenario: Scenario, stack, seed: int):
        from .stacks import StackSpec, get_stack

        scenario.validate()
        self.scenario = scenario
        self.spec = stack if isinstance(stack, StackSpec) else get_stack(stack)
        stack = self.spec.name
        self.seed = seed
        self.rng = random.Random(seed)
        self.F = scenario.failure_pattern
        n = scenario.n
        self.nodes = {p: self.spec.factory(p, scenario, seed) for p in range(1, n + 1)}
        self.phase = {p: self.rng.randrange(scenario.delta_t) for p in range(1, n + 1)}
        self.chains = {p: {} for p in range(1, n + 1)} if self.spec.tracks_hops else None
        self.trace = Trace(
            scenario=scenario,
            stack=stack,
            seed=seed,
            failure_pattern=self.F,
            fd_history=FdHistory("omega"),
            sigma_history=FdHistory("sigma") if scenario.sigma else None,
            nodes=self.nodes,
        )
        self.inflight: dict[int, list[Message]] = defaultdict(list)
        self.last_on_link: dict[tuple[int, int], int] = {}
        self.digests = {p: digest(node.snapshot()) for p, node in self.nodes.items()}

    def record(self, kind: str, ctx: StepContext, op: str, data: dict) -> None:
        rec = Record(kind, ctx.tick, ctx.pid, ctx.step_index, op, data)
        (self.trace.inputs if kind == "input" else self.trace.outputs).append(rec)
        self.trace.log.append((kind, rec))

    def run(self) -> Trace:
        sc = self.scenario
        inputs = defaultdict(list)
        for tick, pid, op in self.spec.inputs(sc, self.seed):
            inputs[(tick, pid)].append(op)
        for t in range(sc.horizon + 1):
            for p in range(1, sc.n + 1):
                if sc.crash_time.get(p) == t:
                    self.trace.log.append(("crash", (t, p)))
            arriving = self.inflight.pop(t, [])
            arriving.sort(key=lambda m: (m.dst, m.sent_at, m.uid))
            by_dst = defaultdict(list)
            for m in arriving:
                if self.F.alive(m.dst, t):
                    by_dst[m.dst].append(m)
                else:
                    m.dropped = True
                    self.trace.log.append(("drop", (t, m)))
            for p in range(1, sc.n + 1):
                if not self.F.alive(p, t):
                    continue
                for m in by_dst.get(p, ()):
                    self._step(p, t, RECV, m)
                for op in inputs.get((t, p), ()):
                    self._step(p, t, INPUT, op)
                if (t - self.phase[p]) % sc.delta_t == 0:
                    self._step(p, t, TIMER, None)
        return self.trace

    def _step(self, p: int, t: int, via: str, item) -> None:
        sc = self.scenario
        fd = omega_output(sc.omega, self.F, p, t)
        self.trace.fd_history.record(p, t, fd)
        if self.trace.sigma_history is not None:
            self.trace.sigma_history.record(p, t, sigma_output(sc.sigma, self.F, p, t))
        index = len(self.trace.steps)
        step = Step(index, t, p, via, fd, "")
        self.trace.steps.append(step)
        self.trace.log.append(("step", step))
        ctx = StepContext(self, p, t, fd, index)
        node = self.nodes[p]
        before = node.snapshot()
        if via == RECV:
            item.received_step = index
            step.received = item.uid
            self.trace.log.append(("recv", item))
            if self.chains is not None and item.chain:
                mine = self.chains[p]
                cross = 1 if item.src != p else 0
                for mid, (h, c) in item.chain.items():
                    old = mine.get(mid)
                    if old is None:
                        mine[mid] = (h + 1, c + cross)
                    else:
                        mine[mid] = (max(old[0], h + 1), max(old[1], c + cross))
            node.on_receive(ctx, item.src, item.body)
        elif via == INPUT:
            node.on_input(ctx, item)
        else:
            node.on_timeout(ctx)
        after = node.snapshot()
        if after != before:
            self.digests[p] = digest(after)
        step.digest = self.digests[p]
        if ctx.sent:
            chain = dict(self.chains[p]) if self.chains is not None else None
            uids = []
            for dst, body in ctx.sent:
                if not 1 <= dst <= sc.n:
                    raise ConfigError(f"process {p} sent to unknown process {dst}")
                delay = self.rng.randint(1, sc.delta_c)
                at = t + delay
                if sc.fifo:
                    at = max(at, self.last_on_link.get((p, dst), 0))
                    self.last_on_link[(p, dst)] = at
                m = Message(len(self.trace.messages), p, dst, t, at, body, index, chain)
                self.trace.messages.append(m)
                self.trace.log.append(("send", m))
                uids.append(m.uid)
                if at <= sc.horizon:
                    self.inflight[at].append(m)
            step.sends = tuple(uids)


def run_simulation(scenario: Scenario, stack, seed: int | None = None) -> Trace:
    """Run ``stack`` (an id or a ``StackSpec``) on ``scenario``; ``seed`` defaults to the scenario's own."""
    if seed is None:
        seed = scenario.seed
    scenario = scenario.with_seed(seed)
    return _Run(scenario, stack, seed).run()


# -- analysis --------------------------------------------------------------


def admissibility_report(trace: Trace) -> dict:
    """Check the bounded fairness and delivery obligations of a finished trace."""
    sc = trace.scenario
    F = trace.failure_pattern
    violations = []
    step_ticks = defaultdict(set)
    for s in trace.steps:
        step_ticks[s.pid].add(s.time)
    fair = True
    for p in sorted(F.correct):
        ticks = step_ticks[p]
        # every window [w, w + delta_t) fully inside the horizon needs a step
        for w in range(0, sc.horizon - sc.delta_t + 2):
            if not any(w + i in ticks for i in range(sc.delta_t)):
                fair = False
                violations.append({"kind": "unfair", "pid": p, "window_start": w})
                break
    delivered_ok = True
    step_time = {s.index: s.time for s in trace.steps}
    for m in trace.messages:
        if m.dst not in F.correct or m.sent_at + sc.delta_c > sc.horizon:
            continue
        got = m.received_step
        if got not in step_time or step_time[got] - m.sent_at > sc.delta_c:
            delivered_ok = False
            violations.append({"kind": "late", "message": m.uid, "src": m.src, "dst": m.dst, "sent_at": m.sent_at})
    return {"fair_steps": fair, "all_deliveries_met": delivered_ok, "violations": violations}
