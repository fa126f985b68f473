"""Three-valued property checking over finite traces.

Safety clauses are checked at every instant. Eventual clauses look for the
least stabilization point (a tick for broadcast stability and order, an
instance for consensus agreement and integrity) and report it as the
verdict's witness. Liveness clauses are judged at the horizon: met is
satisfied, unmet is violated once the history is quiescent (no input and
no relevant output change during the last ``window`` ticks) and
inconclusive otherwise. An eventual clause whose stabilization point falls
inside the final window is likewise violated only if quiescent.

Instants have tick granularity: the values a process holds "at tick t" are
the one it entered the tick with plus every value it took during the tick.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable

from .etob import fmt_id
from .sim import Trace
from .verdict import INCONCLUSIVE, SATISFIED, VIOLATED, Verdict, combine

MsgId = tuple[int, int]
Seq = tuple[MsgId, ...]


# -- histories ---------------------------------------------------------------


@dataclass
class DeliveryHistory:
    """Per-process delivered-sequence changes plus broadcast records."""

    n: int
    correct: frozenset[int]
    horizon: int
    window: int
    changes: dict[int, list[tuple[int, Seq]]] = field(default_factory=dict)
    broadcasts: dict[MsgId, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        for p in range(1, self.n + 1):
            self.changes.setdefault(p, [])

    def last_activity(self) -> int:
        ticks = [t for _, t in self.broadcasts.values()]
        ticks += [ch[-1][0] for p, ch in self.changes.items() if ch and p in self.correct]
        return max(ticks, default=-1)

    def quiescent(self) -> bool:
        return self.last_activity() <= self.horizon - self.window

    def final(self, p: int) -> Seq:
        ch = self.changes[p]
        return ch[-1][1] if ch else ()

    def held_at(self, p: int, t: int) -> list[Seq]:
        """Every value ``p`` holds during tick ``t`` (entering value first)."""
        entering: Seq = ()
        during = []
        for tick, v in self.changes[p]:
            if tick < t:
                entering = v
            elif tick == t:
                during.append(v)
            else:
                break
        return [entering] + during


def delivery_history(trace: Trace) -> DeliveryHistory:
    sc = trace.scenario
    h = DeliveryHistory(sc.n, trace.failure_pattern.correct, sc.horizon, sc.quiet_window)
    for r in trace.outputs_of("deliver"):
        h.changes[r.pid].append((r.time, tuple(r.data["d"])))
    for r in trace.inputs_of("broadcast"):
        h.broadcasts[r.data["id"]] = (r.pid, r.time)
    return h


@dataclass(frozen=True)
class Event:
    tick: int
    step: int
    pid: int
    instance: int
    value: Any


@dataclass
class ConsensusHistory:
    """Proposals and responses of one consensus-style interface."""

    n: int
    correct: frozenset[int]
    horizon: int
    window: int
    instances: int
    proposals: list[Event] = field(default_factory=list)
    responses: list[Event] = field(default_factory=list)

    def last_activity(self) -> int:
        return max((e.tick for e in self.proposals + self.responses), default=-1)

    def quiescent(self) -> bool:
        return self.last_activity() <= self.horizon - self.window


def consensus_history(trace: Trace, propose_op: str = "propose", decide_op: str = "decide") -> ConsensusHistory:
    sc = trace.scenario
    h = ConsensusHistory(sc.n, trace.failure_pattern.correct, sc.horizon, sc.quiet_window, sc.workload.instances)
    for r in trace.inputs_of(propose_op):
        h.proposals.append(Event(r.time, r.step, r.pid, r.data["instance"], r.data["value"]))
    for r in trace.outputs_of(decide_op):
        h.responses.append(Event(r.time, r.step, r.pid, r.data["instance"], r.data["value"]))
    return h


# -- sequence helpers ----------------------------------------------------------


def is_prefix(a: Seq, b: Seq) -> bool:
    return len(a) <= len(b) and b[: len(a)] == a


def order_conflict(a: Seq, b: Seq):
    """A pair ``(x, y)`` with x before y in ``a`` but y before x in ``b``, else None."""
    pos_b = {m: i for i, m in enumerate(b)}
    common = [m for m in a if m in pos_b]
    for x, y in zip(common, common[1:]):
        if pos_b[x] > pos_b[y]:
            return (x, y)
    return None


def _ids(seq: Iterable[MsgId]) -> list[str]:
    return [fmt_id(m) for m in seq]


def _liveness(name: str, missing: dict | None, quiescent: bool) -> Verdict:
    if missing is None:
        return Verdict(name, SATISFIED)
    return Verdict(name, VIOLATED if quiescent else INCONCLUSIVE, counterexample=missing)


def _eventual(name: str, point: int, last_ok: int, overflow: bool, quiescent: bool, evidence) -> Verdict:
    """Verdict for an eventual clause stabilizing at ``point``.

    ``last_ok`` is the latest acceptable stabilization point; ``overflow``
    says the point lies past the end of the history.
    """
    if point <= last_ok and not overflow:
        return Verdict(name, SATISFIED, witness=point, counterexample=evidence)
    status = VIOLATED if quiescent else INCONCLUSIVE
    return Verdict(name, status, witness=None if overflow else point, counterexample=evidence)


# -- broadcast suites -----------------------------------------------------------


def _no_creation(h: DeliveryHistory) -> Verdict:
    for p in range(1, h.n + 1):
        for t, v in h.changes[p]:
            for m in v:
                b = h.broadcasts.get(m)
                if b is None or b[1] >= t:
                    why = "never broadcast" if b is None else f"broadcast at t={b[1]}"
                    return Verdict("no-creation", VIOLATED,
                                   counterexample={"pid": p, "tick": t, "message": fmt_id(m), "why": why})
    return Verdict("no-creation", SATISFIED)


def _no_duplication(h: DeliveryHistory) -> Verdict:
    for p in range(1, h.n + 1):
        for t, v in h.changes[p]:
            if len(set(v)) != len(v):
                seen = set()
                dup = next(m for m in v if m in seen or seen.add(m))
                return Verdict("no-duplication", VIOLATED,
                               counterexample={"pid": p, "tick": t, "message": fmt_id(dup)})
    return Verdict("no-duplication", SATISFIED)


def _validity(h: DeliveryHistory) -> Verdict:
    missing = None
    for m, (p, t) in sorted(h.broadcasts.items(), key=lambda kv: (kv[1][1], kv[0])):
        if p in h.correct and m not in h.final(p):
            missing = {"message": fmt_id(m), "pid": p, "broadcast_at": t}
            break
    return _liveness("validity", missing, h.quiescent())


def _agreement(h: DeliveryHistory) -> Verdict:
    missing = None
    correct = sorted(h.correct)
    finals = {p: set(h.final(p)) for p in correct}
    for p in correct:
        for m in h.final(p):
            lacking = [q for q in correct if m not in finals[q]]
            if lacking:
                missing = {"message": fmt_id(m), "delivered_by": p, "missing_at": lacking[0]}
                break
        if missing:
            break
    return _liveness("agreement", missing, h.quiescent())


def stability_breaks(h: DeliveryHistory):
    """Yield ``(tick, pid, before, after)`` for each non-prefix change at a correct process."""
    for p in sorted(h.correct):
        prev: Seq = ()
        for t, v in h.changes[p]:
            if not is_prefix(prev, v):
                yield t, p, prev, v
            prev = v


def order_violations(h: DeliveryHistory):
    """Yield ``(tick, p, q, x, y)`` for the ticks at which correct processes disagree on order.

    Only the ticks where some value changes are scanned explicitly; a
    disagreement among final values is reported at the horizon, since it
    persists to the end.
    """
    correct = sorted(h.correct)
    ticks = sorted({t for p in correct for t, _ in h.changes[p]})
    idx = {p: 0 for p in correct}
    cur: dict[int, Seq] = {p: () for p in correct}
    for t in ticks:
        held = {}
        for p in correct:
            vals = [cur[p]]
            ch = h.changes[p]
            while idx[p] < len(ch) and ch[idx[p]][0] == t:
                vals.append(ch[idx[p]][1])
                idx[p] += 1
            held[p] = vals
            cur[p] = vals[-1]
        hit = _first_conflict(held, correct)
        if hit:
            yield (t,) + hit
    hit = _first_conflict({p: [cur[p]] for p in correct}, correct)
    if hit and (not ticks or ticks[-1] < h.horizon):
        yield (h.horizon,) + hit


def _first_conflict(held: dict[int, list[Seq]], procs: list[int]):
    for i, p in enumerate(procs):
        for q in procs[i + 1:]:
            for a in held[p]:
                for b in held[q]:
                    c = order_conflict(a, b)
                    if c:
                        return (p, q) + c
    return None


def stabilization_point(h: DeliveryHistory):
    """Least tau such that stability and total order hold from tau on, with evidence at tau-1."""
    tau_s, ev_s = 0, None
    for t, p, before, after in stability_breaks(h):
        if t + 1 >= tau_s:
            tau_s = t + 1
            ev_s = {"clause": "stability", "pid": p, "tick": t, "before": _ids(before), "after": _ids(after)}
    tau_o, ev_o = 0, None
    for t, p, q, x, y in order_violations(h):
        if t + 1 >= tau_o:
            tau_o = t + 1
            ev_o = {"clause": "total-order", "tick": t, "pids": [p, q], "first": fmt_id(x), "second": fmt_id(y)}
    return tau_s, ev_s, tau_o, ev_o


def brute_force_tau(h: DeliveryHistory) -> int:
    """Independent scan of every tick; slow but obviously correct."""
    correct = sorted(h.correct)
    bad_ticks = set()
    for t in range(h.horizon + 1):
        held = {p: h.held_at(p, t) for p in correct}
        for p in correct:
            vals = held[p]
            if any(not is_prefix(vals[i], vals[j]) for i in range(len(vals)) for j in range(i + 1, len(vals))):
                bad_ticks.add(t)
        for i, p in enumerate(correct):
            for q in correct[i + 1:]:
                if any(order_conflict(a, b) for a in held[p] for b in held[q]):
                    bad_ticks.add(t)
    return max(bad_ticks) + 1 if bad_ticks else 0


def _holds_from(h: DeliveryHistory, tau: int) -> bool:
    """Stability and total order at every instant from ``tau`` to the horizon."""
    correct = sorted(h.correct)
    for p in correct:
        vals = h.held_at(p, tau) + [v for t, v in h.changes[p] if t > tau]
        if any(not is_prefix(a, b) for a, b in zip(vals, vals[1:])):
            return False
    return not any(t >= tau for t, *_ in order_violations(h))


def check_etob(h: DeliveryHistory, horizon: int | None = None) -> Verdict:
    if horizon is not None:
        h.horizon = horizon
    tau_s, ev_s, tau_o, ev_o = stabilization_point(h)
    tau = max(tau_s, tau_o)
    # Verify the witness both ways: it works, and one tick earlier does not.
    if not _holds_from(h, tau) or (tau > 0 and _holds_from(h, tau - 1)):
        raise AssertionError(f"stabilization witness {tau} failed self-check")
    quiet = h.quiescent()
    last_ok = h.horizon - h.window
    overflow = tau > h.horizon
    clauses = [
        _validity(h),
        _no_creation(h),
        _no_duplication(h),
        _agreement(h),
        _eventual("stability", tau_s, last_ok, tau_s > h.horizon, quiet, ev_s),
        _eventual("total-order", tau_o, last_ok, tau_o > h.horizon, quiet, ev_o),
    ]
    return combine("etob", clauses, witness=None if overflow else tau)


def check_tob_strict(h: DeliveryHistory, horizon: int | None = None) -> Verdict:
    if horizon is not None:
        h.horizon = horizon
    stab = next(iter(stability_breaks(h)), None)
    order = next(iter(order_violations(h)), None)
    clauses = [_validity(h), _no_creation(h), _no_duplication(h), _agreement(h)]
    if stab:
        t, p, before, after = stab
        clauses.append(Verdict("stability", VIOLATED, counterexample={
            "pid": p, "tick": t, "before": _ids(before), "after": _ids(after)}))
    else:
        clauses.append(Verdict("stability", SATISFIED, witness=0))
    if order:
        t, p, q, x, y = order
        clauses.append(Verdict("total-order", VIOLATED, counterexample={
            "tick": t, "pids": [p, q], "first": fmt_id(x), "second": fmt_id(y)}))
    else:
        clauses.append(Verdict("total-order", SATISFIED, witness=0))
    return combine("tob", clauses, witness=0)


# -- causal order ----------------------------------------------------------------


def causal_relation(trace: Trace) -> dict[MsgId, frozenset[MsgId]]:
    """Map each broadcast message to every message it causally depends on.

    A process knows a message once it broadcast it or received a protocol
    message carrying it; what it knows when it broadcasts ``m`` (closed
    under dependency) is what ``m`` depends on.
    """
    known: dict[int, set[MsgId]] = defaultdict(set)
    preds: dict[MsgId, frozenset[MsgId]] = {}
    for kind, item in trace.log:
        if kind == "recv":
            mine = known[item.dst]
            for mid in item.body.carries():
                if mid not in mine:
                    mine.add(mid)
                    mine |= preds.get(mid, frozenset())
        elif kind == "input" and item.op == "broadcast":
            mid = item.data["id"]
            preds[mid] = frozenset(known[item.pid])
            known[item.pid].add(mid)
    return preds


def check_causal_order(h: DeliveryHistory, relation: dict[MsgId, frozenset[MsgId]]) -> Verdict:
    checked: set[Seq] = set()
    for p in sorted(h.correct):
        for t, v in h.changes[p]:
            if v in checked:
                continue
            after: set[MsgId] = set()
            for m in reversed(v):
                bad = relation.get(m, frozenset()) & after
                if bad:
                    first = min(bad)
                    return Verdict("causal-order", VIOLATED, counterexample={
                        "pid": p, "tick": t, "cause": fmt_id(first), "effect": fmt_id(m)})
                after.add(m)
            checked.add(v)
    return Verdict("causal-order", SATISFIED, witness=0)


# -- consensus suites --------------------------------------------------------------


def _validity_events(h: ConsensusHistory, name: str) -> Verdict:
    proposed = defaultdict(list)
    for e in h.proposals:
        proposed[e.instance].append(e)
    for r in h.responses:
        if not any(e.value == r.value and e.step < r.step for e in proposed[r.instance]):
            return Verdict(name, VIOLATED, counterexample={
                "pid": r.pid, "instance": r.instance, "tick": r.tick, "value": repr(r.value)})
    return Verdict(name, SATISFIED)


def _termination(h: ConsensusHistory) -> Verdict:
    answered = {(e.pid, e.instance) for e in h.responses}
    missing = None
    for p in sorted(h.correct):
        for j in range(1, h.instances + 1):
            if (p, j) not in answered:
                missing = {"pid": p, "instance": j}
                break
        if missing:
            break
    return _liveness("termination", missing, h.quiescent())


def check_ec_history(h: ConsensusHistory, horizon: int | None = None) -> Verdict:
    if horizon is not None:
        h.horizon = horizon
    quiet = h.quiescent()
    per_key = defaultdict(list)
    for r in h.responses:
        per_key[(r.pid, r.instance)].append(r)
    integrity = Verdict("integrity", SATISFIED)
    for key in sorted(per_key):
        if len(per_key[key]) > 1:
            integrity = Verdict("integrity", VIOLATED, counterexample={
                "pid": key[0], "instance": key[1], "ticks": [r.tick for r in per_key[key]]})
            break

    values = defaultdict(dict)
    for r in h.responses:
        values[r.instance].setdefault(r.pid, r.value)
    disagree = [j for j in sorted(values) if len(set(map(repr, values[j].values()))) > 1]
    k = disagree[-1] + 1 if disagree else 1
    evidence = None
    if disagree:
        j = disagree[-1]
        evidence = {"instance": j, "values": {str(p): repr(v) for p, v in sorted(values[j].items())}}
    last = max(h.instances, max(values, default=0))
    agreement = _eventual("agreement", k, last, bool(disagree) and k > last, quiet, evidence)
    clauses = [_termination(h), integrity, _validity_events(h, "validity"), agreement]
    return combine("ec", clauses, witness=k if agreement.ok else None)


def check_eic_history(h: ConsensusHistory, horizon: int | None = None) -> Verdict:
    if horizon is not None:
        h.horizon = horizon
    quiet = h.quiescent()
    per_key = defaultdict(list)
    for r in h.responses:
        per_key[(r.pid, r.instance)].append(r)
    revised = sorted({key[1] for key, rs in per_key.items() if len(rs) > 1})
    k = revised[-1] + 1 if revised else 1
    evidence = None
    if revised:
        j = revised[-1]
        pid = min(p for (p, i), rs in per_key.items() if i == j and len(rs) > 1)
        evidence = {"instance": j, "pid": pid, "values": [repr(r.value) for r in per_key[(pid, j)]]}
    last = max(h.instances, max((i for _, i in per_key), default=0))
    integrity = _eventual("integrity", k, last, bool(revised) and k > last, quiet, evidence)

    final = {key: rs[-1].value for key, rs in per_key.items()}
    agreement = Verdict("agreement", SATISFIED)
    for j in sorted({i for _, i in final}):
        vals = {p: final[(p, j)] for p in sorted(h.correct) if (p, j) in final}
        if len(set(map(repr, vals.values()))) > 1:
            agreement = Verdict("agreement", VIOLATED if quiet else INCONCLUSIVE, counterexample={
                "instance": j, "final_values": {str(p): repr(v) for p, v in vals.items()}})
            break
    clauses = [_termination(h), integrity, agreement, _validity_events(h, "validity")]
    return combine("eic", clauses, witness=k if integrity.ok else None)


# -- latency ---------------------------------------------------------------------


def measure_delivery_steps(trace: Trace) -> list[dict]:
    """Hop counts and tick latency from each broadcast to its stable delivery at each correct process."""
    from .stacks import get_stack

    if not get_stack(trace.stack).tracks_hops:
        raise ValueError(f"stack {trace.stack!r} records no hop metadata")
    entries: dict[int, list[tuple[int, Seq, dict]]] = defaultdict(list)
    for r in trace.outputs_of("deliver"):
        entries[r.pid].append((r.time, tuple(r.data["d"]), {mid: (hh, c) for mid, hh, c in r.data["hops"]}))
    rows = []
    correct = sorted(trace.failure_pattern.correct)
    for rec in trace.inputs_of("broadcast"):
        mid = rec.data["id"]
        for q in correct:
            stable = None
            for t, v, hops in entries[q]:
                if mid in v:
                    if stable is None:
                        stable = (t, hops.get(mid))
                else:
                    stable = None
            row = {"message": fmt_id(mid), "sender": rec.pid, "broadcast_at": rec.time, "recipient": q,
                   "hops": None, "cross_hops": None, "stable_at": None, "latency": None}
            if stable is not None and stable[1] is not None:
                t, (hh, c) = stable
                row.update(hops=hh, cross_hops=c, stable_at=t, latency=t - rec.time)
            rows.append(row)
    return rows


def check_latency(trace: Trace, tau: int | None = None, bound: int = 2) -> Verdict:
    """Broadcasts from tick ``tau`` on must reach every correct process within ``bound`` hops."""
    h = delivery_history(trace)
    if tau is None:
        tau = check_etob(delivery_history(trace)).witness
        if tau is None:
            return Verdict("latency", INCONCLUSIVE, counterexample={"why": "no stabilization point"})
    rows = measure_delivery_steps(trace)
    correct = trace.failure_pattern.correct
    missing = None
    for row in rows:
        if row["broadcast_at"] < tau or row["sender"] not in correct:
            continue
        if row["hops"] is None:
            missing = missing or row
        elif row["hops"] > bound:
            return Verdict("latency", VIOLATED, witness=tau, counterexample=row)
    if missing:
        return Verdict("latency", VIOLATED if h.quiescent() else INCONCLUSIVE, witness=tau, counterexample=missing)
    return Verdict("latency", SATISFIED, witness=tau)


# -- dispatch ------------------------------------------------------------------------


def run_check(trace: Trace, name: str) -> Verdict:
    if name == "etob":
        return check_etob(delivery_history(trace))
    if name == "tob":
        return check_tob_strict(delivery_history(trace))
    if name == "causal":
        return check_causal_order(delivery_history(trace), causal_relation(trace))
    if name == "ec":
        return check_ec_history(consensus_history(trace))
    if name == "eic":
        return check_eic_history(consensus_history(trace, "propose-eic", "decide-eic"))
    if name == "latency":
        return check_latency(trace)
    raise ValueError(f"unknown check {name!r}")
