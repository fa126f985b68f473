"""Eventual total order broadcast from a leader oracle.

Each process accumulates a causal graph of broadcast messages, keeps a
growing topological order of it (``promote``), and delivers by copying the
promote sequence of whichever process its oracle currently trusts.

All transitions are pure: they take an ``EtobState`` and return a new one.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

from .errors import ProtocolError

MsgId = tuple[int, int]


@dataclass(frozen=True)
class AppMessage:
    """Broadcast message; equality and hashing use the id only."""

    id: MsgId
    payload: object = field(compare=False)

    def __repr__(self):
        return f"{self.id[0]}.{self.id[1]}"


def fmt_id(mid: MsgId) -> str:
    return f"{mid[0]}.{mid[1]}"


def fmt_seq(seq) -> str:
    return "[" + ",".join(fmt_id(m.id) for m in seq) + "]"


@dataclass(frozen=True)
class CausalGraph:
    nodes: frozenset[AppMessage] = frozenset()
    edges: frozenset[tuple[MsgId, MsgId]] = frozenset()

    def ids(self) -> set[MsgId]:
        return {m.id for m in self.nodes}

    def union(self, other: "CausalGraph") -> "CausalGraph":
        if other.nodes <= self.nodes and other.edges <= self.edges:
            return self
        return CausalGraph(self.nodes | other.nodes, self.edges | other.edges)

    def add(self, m: AppMessage, deps) -> "CausalGraph":
        return CausalGraph(self.nodes | {m}, self.edges | {(d, m.id) for d in deps})

    def wire(self) -> str:
        nodes = ",".join(fmt_id(i) for i in sorted(self.ids()))
        edges = ",".join(f"{fmt_id(a)}>{fmt_id(b)}" for a, b in sorted(self.edges))
        return f"nodes=[{nodes}] edges=[{edges}]"


@dataclass(frozen=True)
class Update:
    cg: CausalGraph

    def wire(self) -> str:
        return f"update{{{self.cg.wire()}}}"

    def carries(self) -> tuple[MsgId, ...]:
        return tuple(sorted(self.cg.ids()))


@dataclass(frozen=True)
class Promote:
    seq: tuple[AppMessage, ...]

    def wire(self) -> str:
        return f"promote{{seq={fmt_seq(self.seq)}}}"

    def carries(self) -> tuple[MsgId, ...]:
        return ()


@dataclass(frozen=True)
class EtobState:
    pid: int
    n: int
    d: tuple[AppMessage, ...] = ()
    promote: tuple[AppMessage, ...] = ()
    cg: CausalGraph = CausalGraph()
    next_seq: int = 1


def update_promote(promote: tuple[AppMessage, ...], cg: CausalGraph) -> tuple[AppMessage, ...]:
    """Extend ``promote`` with the missing cg nodes in least-id-first topological order."""
    placed = {m.id for m in promote}
    pending = {m.id: m for m in cg.nodes if m.id not in placed}
    if not pending:
        return promote
    waiting: dict[MsgId, int] = {i: 0 for i in pending}
    succs: dict[MsgId, list[MsgId]] = {}
    for a, b in cg.edges:
        if b in pending:
            if a in pending:
                waiting[b] += 1
                succs.setdefault(a, []).append(b)
            elif a not in placed:
                raise ProtocolError(f"edge from unknown node {a} to {b}")
        elif a in pending:
            raise ProtocolError(f"promoted node {b} depends on unpromoted {a}")
    ready = [i for i, w in waiting.items() if w == 0]
    heapq.heapify(ready)
    batch = []
    while ready:
        i = heapq.heappop(ready)
        batch.append(pending[i])
        for j in succs.get(i, ()):
            waiting[j] -= 1
            if waiting[j] == 0:
                heapq.heappush(ready, j)
    if len(batch) != len(pending):
        raise ProtocolError("causal graph has a cycle")
    return promote + tuple(batch)


def handle_broadcast(state: EtobState, payload, deps=None):
    """Create a message depending on ``deps`` (default: whole known graph)."""
    known = state.cg.ids()
    deps = known if deps is None else set(deps)
    if not deps <= known:
        raise ProtocolError(f"unknown dependencies {sorted(deps - known)}")
    m = AppMessage((state.pid, state.next_seq), payload)
    cg = state.cg.add(m, deps)
    new = replace(state, cg=cg, next_seq=state.next_seq + 1)
    return new, m, [(q, Update(cg)) for q in range(1, state.n + 1)]


def handle_update(state: EtobState, cg_j: CausalGraph) -> EtobState:
    cg = state.cg.union(cg_j)
    promote = update_promote(state.promote, cg)
    if cg is state.cg and promote is state.promote:
        return state
    return replace(state, cg=cg, promote=promote)


def handle_promote(state: EtobState, seq_j, sender: int, fd: int) -> EtobState:
    if fd != sender:
        return state
    return replace(state, d=tuple(seq_j))


def handle_timeout(state: EtobState, fd: int):
    if fd != state.pid:
        return []
    msg = Promote(state.promote)
    return [(q, msg) for q in range(1, state.n + 1)]
