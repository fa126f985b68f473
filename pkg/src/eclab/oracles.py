"""Failure-detector generators (Omega, Sigma) and history validators."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from .errors import ProtocolError
from .scenario import FailurePattern, OmegaSpec, SigmaSpec
from .verdict import SATISFIED, VIOLATED, Verdict


def stable_leader(F: FailurePattern) -> int:
    return min(F.correct)


def omega_output(spec: OmegaSpec, F: FailurePattern, p: int, t: int) -> int:
    if not F.alive(p, t):
        raise ProtocolError(f"crashed process {p} queried its detector at t={t}")
    if t >= spec.tau:
        return stable_leader(F)
    alive = [q for q in F.processes if F.alive(q, t)]
    if (p, t) in spec.overrides:
        leader = spec.overrides[(p, t)]
    elif spec.prestable == "self":
        leader = p
    elif spec.prestable == "table":
        leader = spec.leaders.get(p, alive[0])
    else:
        pool = list(F.processes) if spec.allow_dead_prestable else alive
        leader = random.Random(f"omega:{spec.seed}:{p}:{t}").choice(pool)
    if not spec.allow_dead_prestable and not F.alive(leader, t):
        leader = alive[0]
    return leader


def sigma_output(spec: SigmaSpec, F: FailurePattern, p: int, t: int) -> frozenset[int]:
    if not F.alive(p, t):
        raise ProtocolError(f"crashed process {p} queried its detector at t={t}")
    if t >= spec.tau:
        return F.correct
    rng = random.Random(f"sigma:{spec.seed}:{p}:{t}")
    return frozenset(rng.sample(list(F.processes), F.n // 2 + 1))


@dataclass
class FdHistory:
    """Detector samples actually taken, keyed by (pid, tick)."""

    kind: str
    samples: dict[tuple[int, int], object] = field(default_factory=dict)

    def record(self, p: int, t: int, value) -> None:
        self.samples[(p, t)] = value


def validate_history(h: FdHistory, F: FailurePattern, tau_claim: int) -> Verdict:
    if h.kind == "omega":
        return _validate_omega(h, F, tau_claim)
    if h.kind == "sigma":
        return _validate_sigma(h, F, tau_claim)
    raise ValueError(f"unknown detector kind {h.kind!r}")


def _validate_omega(h: FdHistory, F: FailurePattern, tau_claim: int) -> Verdict:
    name = "omega"
    for (p, t), v in sorted(h.samples.items()):
        if not 1 <= v <= F.n:
            return Verdict(name, VIOLATED, tau_claim, {"pid": p, "tick": t, "value": v, "why": "not a process id"})
    late = sorted((k, v) for k, v in h.samples.items() if k[1] >= tau_claim and k[0] in F.correct)
    if not late:
        return Verdict(name, SATISFIED, tau_claim)
    # The majority value is the candidate leader, so a single planted outlier
    # is reported as the outlier rather than poisoning the whole suffix.
    counts = Counter(v for _, v in late)
    leader = min(counts, key=lambda v: (-counts[v], v))
    for (p, t), v in late:
        if v != leader or v not in F.correct:
            why = "leader not correct" if v not in F.correct else "disagrees with stable leader"
            return Verdict(name, VIOLATED, tau_claim, {"pid": p, "tick": t, "value": v, "leader": leader, "why": why})
    return Verdict(name, SATISFIED, tau_claim)


def _validate_sigma(h: FdHistory, F: FailurePattern, tau_claim: int) -> Verdict:
    name = "sigma"
    first_seen: dict[frozenset, tuple[int, int]] = {}
    for key, q in sorted(h.samples.items()):
        first_seen.setdefault(frozenset(q), key)
    distinct = sorted(first_seen, key=first_seen.__getitem__)
    for i, a in enumerate(distinct):
        for b in distinct[i:]:
            if not a & b:
                return Verdict(name, VIOLATED, tau_claim, {
                    "first": {"pid": first_seen[a][0], "tick": first_seen[a][1], "quorum": sorted(a)},
                    "second": {"pid": first_seen[b][0], "tick": first_seen[b][1], "quorum": sorted(b)},
                    "why": "disjoint quorums",
                })
    for (p, t), q in sorted(h.samples.items()):
        if t >= tau_claim and p in F.correct and not set(q) <= F.correct:
            return Verdict(name, VIOLATED, tau_claim, {
                "pid": p, "tick": t, "quorum": sorted(q), "why": "contains a faulty process",
            })
    return Verdict(name, SATISFIED, tau_claim)
