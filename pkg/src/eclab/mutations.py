"""Seeded mutations that plant known property violations into golden histories.

Each generator copies a history, breaks one clause in a specific place and
returns the verdict it expects from each applicable checker: the clause,
its status, the evidence fields that must match the planted fault and,
for eventual clauses, the stabilization witness. The corpus is used to
show that checkers catch what they should and point at the right place.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Callable

from .checks import (
    ConsensusHistory,
    DeliveryHistory,
    Event,
    causal_relation,
    check_causal_order,
    check_ec_history,
    check_eic_history,
    check_etob,
    check_tob_strict,
    consensus_history,
    delivery_history,
)
from .etob import fmt_id
from .scenario import load_scenario
from .sim import run_simulation
from .verdict import SATISFIED, VIOLATED, Verdict

_ANY = object()
GHOST_SEQ = 10**6


@dataclass(frozen=True)
class Expect:
    clause: str
    status: str
    evidence: dict = field(default_factory=dict)
    witness: Any = _ANY


@dataclass
class Planted:
    target: Any
    expect: dict[str, Expect]


@dataclass(frozen=True)
class Mutation:
    family: str  # "broadcast", "causal", "ec" or "eic"
    clause: str
    name: str
    plant: Callable[[Any], Planted]


def _ids(seq) -> list[str]:
    return [fmt_id(m) for m in seq]


def _correct(h) -> list[int]:
    return sorted(h.correct)


def _copy(h):
    return copy.deepcopy(h)


def _replace_everywhere(h: DeliveryHistory, p: int, fn) -> None:
    h.changes[p] = [(t, fn(v)) for t, v in h.changes[p]]


def _latest_process(h: DeliveryHistory) -> int:
    """Correct process whose final change is latest (highest pid on ties)."""
    return max(_correct(h), key=lambda p: (h.changes[p][-1][0] if h.changes[p] else -1, p))


# -- broadcast suites (ETOB and strict TOB) ---------------------------------------


def _validity_drop_own(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    m, (p, t) = min(((m, b) for m, b in h.broadcasts.items() if b[0] in h.correct),
                    key=lambda kv: (kv[1][1], kv[0]))
    for q in range(1, h.n + 1):
        _replace_everywhere(h, q, lambda v: tuple(x for x in v if x != m))
    ev = {"message": fmt_id(m), "pid": p, "broadcast_at": t}
    return Planted(h, {s: Expect("validity", VIOLATED, ev) for s in ("etob", "tob")})


def _validity_phantom(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    p = _correct(h)[0]
    m = (p, 0)
    h.broadcasts[m] = (p, 0)
    ev = {"message": fmt_id(m), "pid": p, "broadcast_at": 0}
    return Planted(h, {s: Expect("validity", VIOLATED, ev) for s in ("etob", "tob")})


def _first_nonempty(h: DeliveryHistory):
    for p in range(1, h.n + 1):
        for i, (t, v) in enumerate(h.changes[p]):
            if v:
                return p, i, t, v
    raise ValueError("history delivers nothing")


def _creation_unknown(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    p, i, t, v = _first_nonempty(h)
    ghost = (p, GHOST_SEQ)
    h.changes[p][i] = (t, v + (ghost,))
    ev = {"pid": p, "tick": t, "message": fmt_id(ghost), "why": "never broadcast"}
    return Planted(h, {s: Expect("no-creation", VIOLATED, ev) for s in ("etob", "tob")})


def _creation_early(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    p, i, t, v = _first_nonempty(h)
    m = v[0]
    h.broadcasts[m] = (h.broadcasts[m][0], t)
    ev = {"pid": p, "tick": t, "message": fmt_id(m), "why": f"broadcast at t={t}"}
    return Planted(h, {s: Expect("no-creation", VIOLATED, ev) for s in ("etob", "tob")})


def _dup_first(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    p, i, t, v = _first_nonempty(h)
    h.changes[p][i] = (t, v + (v[-1],))
    ev = {"pid": p, "tick": t, "message": fmt_id(v[-1])}
    return Planted(h, {s: Expect("no-duplication", VIOLATED, ev) for s in ("etob", "tob")})


def _dup_final(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    p = next(q for q in range(1, h.n + 1) if h.final(q))
    t, v = h.changes[p][-1]
    h.changes[p][-1] = (t, v + (v[0],))
    ev = {"pid": p, "tick": t, "message": fmt_id(v[0])}
    return Planted(h, {s: Expect("no-duplication", VIOLATED, ev) for s in ("etob", "tob")})


def _agreement_withhold(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    correct = _correct(h)
    low, high = correct[0], correct[-1]
    m = h.final(low)[0]
    _replace_everywhere(h, high, lambda v: tuple(x for x in v if x != m))
    ev = {"message": fmt_id(m), "delivered_by": low, "missing_at": high}
    return Planted(h, {s: Expect("agreement", VIOLATED, ev) for s in ("etob", "tob")})


def _agreement_extra(h: DeliveryHistory) -> Planted:
    h = _copy(h)
    correct = _correct(h)
    low = correct[0]
    x = (low, GHOST_SEQ)
    h.broadcasts[x] = (low, 0)
    t, v = h.changes[low][-1]
    h.changes[low][-1] = (t, v + (x,))
    ev = {"message": fmt_id(x), "delivered_by": low, "missing_at": correct[1]}
    return Planted(h, {s: Expect("agreement", VIOLATED, ev) for s in ("etob", "tob")})


def _stability_retract(h: DeliveryHistory) -> Planted:
    """Take back the last message of a process's final value and re-deliver it in the same tick."""
    h = _copy(h)
    p = _latest_process(h)
    t, v = h.changes[p][-1]
    h.changes[p][-1:] = [(t, v), (t, v[:-1]), (t, v)]
    ev = {"pid": p, "tick": t, "before": _ids(v), "after": _ids(v[:-1])}
    return Planted(h, {
        "etob": Expect("stability", SATISFIED, dict(ev, clause="stability"), witness=t + 1),
        "tob": Expect("stability", VIOLATED, ev),
    })


def _stability_reset(h: DeliveryHistory) -> Planted:
    """Empty a process's delivered sequence for an instant."""
    h = _copy(h)
    p = _latest_process(h)
    t, v = h.changes[p][-1]
    h.changes[p][-1:] = [(t, v), (t, ()), (t, v)]
    ev = {"pid": p, "tick": t, "before": _ids(v), "after": []}
    return Planted(h, {
        "etob": Expect("stability", SATISFIED, dict(ev, clause="stability"), witness=t + 1),
        "tob": Expect("stability", VIOLATED, ev),
    })


def _swap2(v):
    return (v[1], v[0]) + v[2:]


def _order_permanent(h: DeliveryHistory) -> Planted:
    """The highest correct process ends with its first two messages swapped."""
    h = _copy(h)
    correct = _correct(h)
    low, q = correct[0], correct[-1]
    t, v = h.changes[q][-1]
    h.changes[q][-1] = (t, _swap2(v))
    ev = {"pids": [low, q], "first": fmt_id(v[0]), "second": fmt_id(v[1])}
    return Planted(h, {
        "etob": Expect("total-order", VIOLATED, dict(ev, tick=h.horizon), witness=None),
        "tob": Expect("total-order", VIOLATED, dict(ev, tick=t)),
    })


def _order_transient(h: DeliveryHistory) -> Planted:
    """One intermediate value of the highest correct process has its first two messages swapped."""
    h = _copy(h)
    q = _correct(h)[-1]
    ch = h.changes[q]
    i = max(j for j in range(len(ch) - 1) if len(ch[j][1]) >= 2)
    t, v = ch[i]
    ch[i] = (t, _swap2(v))
    # the swapped value is still held when entering the tick of the next change
    t_next = ch[i + 1][0]
    return Planted(h, {
        "etob": Expect("total-order", SATISFIED, {"tick": t_next}, witness=t_next + 1),
        "tob": Expect("total-order", VIOLATED, {"tick": t}),
    })


# -- causal order ------------------------------------------------------------------


def _adjacent_dependent(h: DeliveryHistory, rel):
    for p in _correct(h):
        for t, v in h.changes[p]:
            for a, b in zip(v, v[1:]):
                if a in rel.get(b, ()):
                    return p, t, a, b
    raise ValueError("no adjacent dependent pair in the golden history")


def _causal_swap(target) -> Planted:
    h, rel = _copy(target[0]), target[1]
    p, t, a, b = _adjacent_dependent(h, rel)

    def swap(v):
        if a in v and b in v and v.index(b) == v.index(a) + 1:
            i = v.index(a)
            return v[:i] + (b, a) + v[i + 2:]
        return v

    _replace_everywhere(h, p, swap)
    ev = {"pid": p, "tick": t, "cause": fmt_id(a), "effect": fmt_id(b)}
    return Planted((h, rel), {"causal": Expect("causal-order", VIOLATED, ev)})


def _causal_invert_dependency(target) -> Planted:
    """Claim that the earlier of two adjacent independent messages depended on the later one."""
    h, rel = target
    rel = dict(rel)
    for p in _correct(h):
        for t, v in h.changes[p]:
            for a, b in zip(v, v[1:]):
                if a not in rel.get(b, ()):
                    rel[a] = rel.get(a, frozenset()) | {b}
                    first = next((q, s) for q in _correct(h) for s, w in h.changes[q] if a in w and b in w)
                    ev = {"pid": first[0], "tick": first[1], "cause": fmt_id(b), "effect": fmt_id(a)}
                    return Planted((h, rel), {"causal": Expect("causal-order", VIOLATED, ev)})
    raise ValueError("no adjacent independent pair in the golden history")


# -- consensus suites ---------------------------------------------------------------


def _resp(h: ConsensusHistory, p: int, j: int) -> list[int]:
    return [i for i, r in enumerate(h.responses) if r.pid == p and r.instance == j]


def _last_instance(h: ConsensusHistory) -> int:
    return max(r.instance for r in h.responses)


def _other_value(h: ConsensusHistory, j: int, value):
    return min((e.value for e in h.proposals if e.instance == j and e.value != value), key=repr)


def _term_drop(suite):
    def plant(h: ConsensusHistory) -> Planted:
        h = _copy(h)
        q, j = _correct(h)[-1], h.instances
        h.responses = [r for r in h.responses if (r.pid, r.instance) != (q, j)]
        return Planted(h, {suite: Expect("termination", VIOLATED, {"pid": q, "instance": j})})
    return plant


def _term_more(suite):
    def plant(h: ConsensusHistory) -> Planted:
        h = _copy(h)
        h.instances += 1
        return Planted(h, {suite: Expect("termination", VIOLATED, {"pid": _correct(h)[0], "instance": h.instances})})
    return plant


def _integrity_dup_first(h: ConsensusHistory) -> Planted:
    h = _copy(h)
    p = _correct(h)[0]
    i = _resp(h, p, 1)[0]
    r = h.responses[i]
    h.responses.insert(i + 1, r)
    return Planted(h, {"ec": Expect("integrity", VIOLATED, {"pid": p, "instance": 1, "ticks": [r.tick, r.tick]})})


def _integrity_dup_last(h: ConsensusHistory) -> Planted:
    h = _copy(h)
    q, j = _correct(h)[-1], _last_instance(h)
    i = _resp(h, q, j)[-1]
    r = h.responses[i]
    h.responses.insert(i + 1, r)
    return Planted(h, {"ec": Expect("integrity", VIOLATED, {"pid": q, "instance": j, "ticks": [r.tick, r.tick]})})


def _validity_ghost(suite):
    def plant(h: ConsensusHistory) -> Planted:
        h = _copy(h)
        p = _correct(h)[0]
        i = _resp(h, p, 1)[0]
        r = h.responses[i]
        h.responses[i] = Event(r.tick, r.step, r.pid, r.instance, "ghost")
        ev = {"pid": p, "instance": 1, "tick": r.tick, "value": repr("ghost")}
        return Planted(h, {suite: Expect("validity", VIOLATED, ev)})
    return plant


def _validity_late_proposal(suite):
    """Move the proposals backing the first response to just after it."""
    def plant(h: ConsensusHistory) -> Planted:
        h = _copy(h)
        r = h.responses[0]
        h.proposals = [Event(r.tick, r.step + 1, e.pid, e.instance, e.value)
                       if e.instance == r.instance and e.value == r.value else e for e in h.proposals]
        ev = {"pid": r.pid, "instance": r.instance, "tick": r.tick, "value": repr(r.value)}
        return Planted(h, {suite: Expect("validity", VIOLATED, ev)})
    return plant


def _ec_agreement_flip(h: ConsensusHistory) -> Planted:
    h = _copy(h)
    q, j = _correct(h)[-1], _last_instance(h)
    i = _resp(h, q, j)[0]
    r = h.responses[i]
    h.responses[i] = Event(r.tick, r.step, r.pid, j, _other_value(h, j, r.value))
    return Planted(h, {"ec": Expect("agreement", VIOLATED, {"instance": j}, witness=None)})


def _ec_agreement_split(h: ConsensusHistory) -> Planted:
    """Half of the correct processes (rounded up) return another proposed value for the last instance."""
    h = _copy(h)
    correct = _correct(h)
    j = _last_instance(h)
    for p in correct[: (len(correct) + 1) // 2]:
        for i in _resp(h, p, j):
            r = h.responses[i]
            h.responses[i] = Event(r.tick, r.step, p, j, _other_value(h, j, r.value))
    return Planted(h, {"ec": Expect("agreement", VIOLATED, {"instance": j}, witness=None)})


def _eic_revise_last_one(h: ConsensusHistory) -> Planted:
    h = _copy(h)
    p, j = _correct(h)[0], _last_instance(h)
    i = _resp(h, p, j)[-1]
    r = h.responses[i]
    alt = Event(r.tick, r.step, p, j, _other_value(h, j, r.value))
    h.responses[i + 1:i + 1] = [alt, r]
    values = [repr(h.responses[k].value) for k in _resp(h, p, j)]
    ev = {"instance": j, "pid": p, "values": values}
    return Planted(h, {"eic": Expect("integrity", VIOLATED, ev, witness=None)})


def _eic_revise_last_all(h: ConsensusHistory) -> Planted:
    h = _copy(h)
    correct = _correct(h)
    j = _last_instance(h)
    for p in correct:
        i = _resp(h, p, j)[-1]
        r = h.responses[i]
        h.responses.insert(i + 1, Event(r.tick, r.step, p, j, _other_value(h, j, r.value)))
    p = correct[0]
    ev = {"instance": j, "pid": p, "values": [repr(h.responses[k].value) for k in _resp(h, p, j)]}
    return Planted(h, {"eic": Expect("integrity", VIOLATED, ev, witness=None)})


def _eic_agreement_revise_first(h: ConsensusHistory) -> Planted:
    h = _copy(h)
    q = _correct(h)[-1]
    i = _resp(h, q, 1)[-1]
    r = h.responses[i]
    h.responses.insert(i + 1, Event(r.tick, r.step, q, 1, _other_value(h, 1, r.value)))
    return Planted(h, {"eic": Expect("agreement", VIOLATED, {"instance": 1})})


def _eic_agreement_replace_last(h: ConsensusHistory) -> Planted:
    h = _copy(h)
    q, j = _correct(h)[-1], _last_instance(h)
    i = _resp(h, q, j)[-1]
    r = h.responses[i]
    h.responses[i] = Event(r.tick, r.step, q, j, _other_value(h, j, r.value))
    return Planted(h, {"eic": Expect("agreement", VIOLATED, {"instance": j})})


MUTATIONS: list[Mutation] = [
    Mutation("broadcast", "validity", "drop-own-message", _validity_drop_own),
    Mutation("broadcast", "validity", "phantom-broadcast", _validity_phantom),
    Mutation("broadcast", "no-creation", "unknown-message", _creation_unknown),
    Mutation("broadcast", "no-creation", "delivered-before-broadcast", _creation_early),
    Mutation("broadcast", "no-duplication", "duplicate-in-first", _dup_first),
    Mutation("broadcast", "no-duplication", "duplicate-in-final", _dup_final),
    Mutation("broadcast", "agreement", "withhold-at-one", _agreement_withhold),
    Mutation("broadcast", "agreement", "extra-at-one", _agreement_extra),
    Mutation("broadcast", "stability", "retract-last", _stability_retract),
    Mutation("broadcast", "stability", "reset-to-empty", _stability_reset),
    Mutation("broadcast", "total-order", "permanent-swap", _order_permanent),
    Mutation("broadcast", "total-order", "transient-swap", _order_transient),
    Mutation("causal", "causal-order", "swap-dependent-pair", _causal_swap),
    Mutation("causal", "causal-order", "invert-dependency", _causal_invert_dependency),
    Mutation("ec", "termination", "drop-last-response", _term_drop("ec")),
    Mutation("ec", "termination", "demand-extra-instance", _term_more("ec")),
    Mutation("ec", "integrity", "repeat-first-response", _integrity_dup_first),
    Mutation("ec", "integrity", "repeat-last-response", _integrity_dup_last),
    Mutation("ec", "validity", "unproposed-value", _validity_ghost("ec")),
    Mutation("ec", "validity", "decide-before-propose", _validity_late_proposal("ec")),
    Mutation("ec", "agreement", "flip-last-at-one", _ec_agreement_flip),
    Mutation("ec", "agreement", "split-last", _ec_agreement_split),
    Mutation("eic", "termination", "drop-last-response", _term_drop("eic")),
    Mutation("eic", "termination", "demand-extra-instance", _term_more("eic")),
    Mutation("eic", "integrity", "revise-last-at-one", _eic_revise_last_one),
    Mutation("eic", "integrity", "revise-last-everywhere", _eic_revise_last_all),
    Mutation("eic", "validity", "unproposed-value", _validity_ghost("eic")),
    Mutation("eic", "validity", "decide-before-propose", _validity_late_proposal("eic")),
    Mutation("eic", "agreement", "diverge-first", _eic_agreement_revise_first),
    Mutation("eic", "agreement", "replace-last", _eic_agreement_replace_last),
]


# -- running the corpus --------------------------------------------------------------


def run_suite(suite: str, target) -> Verdict:
    if suite == "etob":
        return check_etob(copy.deepcopy(target))
    if suite == "tob":
        return check_tob_strict(copy.deepcopy(target))
    if suite == "causal":
        h, rel = target
        return check_causal_order(h, rel)
    if suite == "ec":
        return check_ec_history(copy.deepcopy(target))
    if suite == "eic":
        return check_eic_history(copy.deepcopy(target))
    raise ValueError(f"unknown suite {suite!r}")


def _clause(verdict: Verdict, name: str) -> Verdict:
    return verdict if not verdict.clauses else verdict.clause(name)


def matches(verdict: Verdict, expect: Expect) -> bool:
    c = _clause(verdict, expect.clause)
    if c.status != expect.status:
        return False
    if expect.witness is not _ANY and c.witness != expect.witness:
        return False
    ev = c.counterexample or {}
    return all(ev.get(k) == v for k, v in expect.evidence.items())


@dataclass
class Detection:
    mutation: Mutation
    suite: str
    detected: bool
    clause: dict


def detect(mutation: Mutation, golden) -> list[Detection]:
    planted = mutation.plant(golden)
    out = []
    for suite, expect in sorted(planted.expect.items()):
        verdict = run_suite(suite, planted.target)
        out.append(Detection(mutation, suite, matches(verdict, expect), _clause(verdict, expect.clause).to_dict()))
    return out


GOLDEN = {
    "broadcast": ("stable-leader", "etob-direct"),
    "causal": ("stable-leader", "etob-direct"),
    "ec": ("stable-leader", "ec-omega"),
    "eic": ("eic-revisions", "eic-from-ec"),
}

GOLDEN_SUITES = {"broadcast": ("etob", "tob"), "causal": ("causal",), "ec": ("ec",), "eic": ("eic",)}


def golden_targets() -> dict[str, Any]:
    """Unmutated histories from bundled scenarios, one per mutation family."""
    out = {}
    for family, (scenario, stack) in GOLDEN.items():
        trace = run_simulation(load_scenario(scenario), stack)
        if family == "broadcast":
            out[family] = delivery_history(trace)
        elif family == "causal":
            out[family] = (delivery_history(trace), causal_relation(trace))
        elif family == "ec":
            out[family] = consensus_history(trace)
        else:
            out[family] = consensus_history(trace, "propose-eic", "decide-eic")
    return out
