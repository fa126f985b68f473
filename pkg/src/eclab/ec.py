"""Eventual consensus from a leader oracle.

A proposal broadcasts ``(value, instance)``; on each timeout a process
decides its current instance with the value it received from the process
its oracle trusts, if that value has arrived.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

from .errors import ProtocolError


def fmt_value(v) -> str:
    """Canonical text form of an opaque proposal value."""
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, tuple):
        return "(" + ",".join(fmt_value(x) for x in v) + ")"
    if hasattr(v, "id") and isinstance(getattr(v, "id"), tuple):
        return f"{v.id[0]}.{v.id[1]}"
    return repr(v)


@dataclass(frozen=True)
class EcPromote:
    value: object
    instance: int

    def wire(self) -> str:
        return f"promote{{v={fmt_value(self.value)}, l={self.instance}}}"

    def carries(self):
        return ()


@dataclass(frozen=True)
class EcState:
    pid: int
    n: int
    count: int = 0
    received: Mapping[tuple[int, int], object] = field(default_factory=lambda: MappingProxyType({}))
    decided: frozenset[int] = frozenset()


def ec_propose(state: EcState, instance: int, value):
    if instance != state.count + 1:
        raise ProtocolError(f"process {state.pid} proposed instance {instance} with count={state.count}")
    msg = EcPromote(value, instance)
    return replace(state, count=instance), [(q, msg) for q in range(1, state.n + 1)]


def ec_handle_promote(state: EcState, sender: int, value, instance: int) -> EcState:
    key = (sender, instance)
    if key in state.received:
        if state.received[key] != value:
            raise ProtocolError(f"conflicting promotes from {sender} for instance {instance}")
        return state
    received = dict(state.received)
    received[key] = value
    return replace(state, received=MappingProxyType(received))


def ec_timeout_decide(state: EcState, fd: int):
    """Return ``(state, (instance, value) or None)``."""
    key = (fd, state.count)
    if state.count == 0 or state.count in state.decided or key not in state.received:
        return state, None
    value = state.received[key]
    return replace(state, decided=state.decided | {state.count}), (state.count, value)
