"""Protocol stacks: per-process nodes wiring protocol layers to the simulator.

A node exposes ``on_input``, ``on_receive``, ``on_timeout`` and
``snapshot``. Layers talk to each other synchronously inside one step.
Each stack also says which application inputs it consumes and which
property suites apply to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .ec import EcPromote, EcState, ec_handle_promote, ec_propose, ec_timeout_decide
from .errors import ConfigError, ProtocolError
from .etob import (
    EtobState,
    Promote,
    Update,
    handle_broadcast,
    handle_promote,
    handle_timeout,
    handle_update,
)
from .scenario import Scenario
from .transforms import (
    EcFromEicState,
    EcToEtobState,
    EicState,
    EtobToEcState,
    Push,
    ec_to_etob_broadcast,
    ec_to_etob_push,
    ec_to_etob_response,
    ec_to_etob_timeout,
    eic_from_ec_propose,
    eic_from_ec_response,
    eic_to_ec_propose,
    eic_to_ec_response,
    etob_to_ec_propose,
    etob_to_ec_timeout,
)


def _ids(seq) -> tuple:
    return tuple(m.id for m in seq)


# -- reusable layers ---------------------------------------------------------


class EtobLayer:
    def __init__(self, pid: int, n: int):
        self.state = EtobState(pid, n)

    def broadcast(self, ctx, payload):
        self.state, m, sends = handle_broadcast(self.state, payload)
        ctx.originate(m.id)
        ctx.send_all(sends)
        return m

    def receive(self, ctx, src, msg) -> bool:
        """Handle an incoming message; True if ``d`` changed."""
        if isinstance(msg, Update):
            self.state = handle_update(self.state, msg.cg)
            return False
        if isinstance(msg, Promote):
            old = self.state.d
            self.state = handle_promote(self.state, msg.seq, src, ctx.fd)
            return self.state.d != old
        raise ProtocolError(f"unexpected message {msg!r}")

    def timeout(self, ctx) -> None:
        ctx.send_all(handle_timeout(self.state, ctx.fd))

    def snapshot(self):
        s = self.state
        return (_ids(s.d), _ids(s.promote), len(s.cg.nodes), len(s.cg.edges), s.next_seq)


class EcLayer:
    def __init__(self, pid: int, n: int):
        self.state = EcState(pid, n)

    def propose(self, ctx, instance: int, value) -> None:
        self.state, sends = ec_propose(self.state, instance, value)
        ctx.send_all(sends)

    def receive(self, src, msg: EcPromote) -> None:
        self.state = ec_handle_promote(self.state, src, msg.value, msg.instance)

    def timeout(self, fd):
        self.state, decision = ec_timeout_decide(self.state, fd)
        return decision

    def snapshot(self):
        s = self.state
        return (s.count, len(s.received), len(s.decided))


class _Driven:
    """Consensus-style driver: instance 1 on start, instance l+1 right after deciding l."""

    def __init__(self, pid: int, scenario: Scenario, seed: int):
        self.pid = pid
        self.n = scenario.n
        self.instances = scenario.workload.instances
        self.workload = scenario.workload
        self.seed = seed

    def value(self, instance: int):
        return self.workload.proposal_value(self.pid, instance, self.seed)

    def on_input(self, ctx, op) -> None:
        if op[0] != "start":
            raise ProtocolError(f"unexpected input {op!r}")
        self.propose(ctx, 1)

    def propose(self, ctx, instance: int) -> None:
        raise NotImplementedError


# -- stacks -------------------------------------------------------------------


class EtobDirectNode:
    def __init__(self, pid: int, scenario: Scenario, seed: int):
        self.etob = EtobLayer(pid, scenario.n)

    def on_input(self, ctx, op) -> None:
        kind, payload = op
        m = self.etob.broadcast(ctx, payload)
        ctx.invoke("broadcast", id=m.id, payload=payload)

    def on_receive(self, ctx, src, msg) -> None:
        old = self.etob.state.d
        if self.etob.receive(ctx, src, msg):
            new = self.etob.state.d
            before = set(_ids(old))
            fresh = [m.id for m in new if m.id not in before]
            hops = tuple((mid,) + ctx.hops(mid) for mid in fresh if ctx.hops(mid) is not None)
            ctx.output("deliver", d=_ids(new), hops=hops)

    def on_timeout(self, ctx) -> None:
        self.etob.timeout(ctx)

    def snapshot(self):
        return self.etob.snapshot()


class EcOmegaNode(_Driven):
    def __init__(self, pid, scenario, seed):
        super().__init__(pid, scenario, seed)
        self.ec = EcLayer(pid, scenario.n)

    def propose(self, ctx, instance):
        v = self.value(instance)
        ctx.invoke("propose", instance=instance, value=v)
        self.ec.propose(ctx, instance, v)

    def on_receive(self, ctx, src, msg):
        self.ec.receive(src, msg)

    def on_timeout(self, ctx):
        decision = self.ec.timeout(ctx.fd)
        if decision:
            instance, value = decision
            ctx.output("decide", instance=instance, value=value)
            if instance < self.instances:
                self.propose(ctx, instance + 1)

    def snapshot(self):
        return self.ec.snapshot()


class EcToEtobNode:
    def __init__(self, pid, scenario, seed):
        self.alg = EcToEtobState(pid, scenario.n)
        self.ec = EcLayer(pid, scenario.n)

    def on_input(self, ctx, op):
        kind, payload = op
        self.alg, m, sends = ec_to_etob_broadcast(self.alg, payload)
        ctx.invoke("broadcast", id=m.id, payload=payload)
        ctx.send_all(sends)

    def on_receive(self, ctx, src, msg):
        if isinstance(msg, Push):
            self.alg = ec_to_etob_push(self.alg, msg.message)
        else:
            self.ec.receive(src, msg)

    def on_timeout(self, ctx):
        self.alg, proposal = ec_to_etob_timeout(self.alg)
        if proposal:
            self.ec.propose(ctx, *proposal)
        decision = self.ec.timeout(ctx.fd)
        if decision:
            old = self.alg.d
            self.alg, proposal = ec_to_etob_response(self.alg, *decision)
            if self.alg.d != old:
                ctx.output("deliver", d=_ids(self.alg.d))
            self.ec.propose(ctx, *proposal)

    def snapshot(self):
        a = self.alg
        return (_ids(a.d), len(a.to_deliver), a.count, a.next_seq) + self.ec.snapshot()


class EtobToEcNode(_Driven):
    def __init__(self, pid, scenario, seed):
        super().__init__(pid, scenario, seed)
        self.alg = EtobToEcState()
        self.etob = EtobLayer(pid, scenario.n)

    def propose(self, ctx, instance):
        v = self.value(instance)
        ctx.invoke("propose", instance=instance, value=v)
        self.alg, payload = etob_to_ec_propose(self.alg, instance, v)
        self.etob.broadcast(ctx, payload)

    def on_receive(self, ctx, src, msg):
        self.etob.receive(ctx, src, msg)

    def on_timeout(self, ctx):
        self.etob.timeout(ctx)
        self.alg, decision = etob_to_ec_timeout(self.alg, self.etob.state.d)
        if decision:
            instance, value = decision
            ctx.output("decide", instance=instance, value=value)
            if instance < self.instances:
                self.propose(ctx, instance + 1)

    def snapshot(self):
        return (self.alg.count, len(self.alg.decided)) + self.etob.snapshot()


class EicFromEcNode(_Driven):
    def __init__(self, pid, scenario, seed):
        super().__init__(pid, scenario, seed)
        self.eic = EicState()
        self.ec = EcLayer(pid, scenario.n)

    def propose(self, ctx, instance):
        v = self.value(instance)
        ctx.invoke("propose-eic", instance=instance, value=v)
        self.eic, seq = eic_from_ec_propose(self.eic, instance, v)
        self.ec.propose(ctx, instance, seq)

    def on_receive(self, ctx, src, msg):
        self.ec.receive(src, msg)

    def on_timeout(self, ctx):
        decision = self.ec.timeout(ctx.fd)
        if decision:
            instance, seq = decision
            self.eic, upcalls = eic_from_ec_response(self.eic, instance, seq)
            for k, v in upcalls:
                ctx.output("decide-eic", instance=k, value=v)
            if instance < self.instances:
                self.propose(ctx, instance + 1)

    def snapshot(self):
        return (self.eic.count, self.eic.decisions) + self.ec.snapshot()


class EicRoundtripNode(_Driven):
    """Consensus built from irrevocable consensus built from consensus."""

    def __init__(self, pid, scenario, seed):
        super().__init__(pid, scenario, seed)
        self.outer = EcFromEicState()
        self.eic = EicState()
        self.ec = EcLayer(pid, scenario.n)

    def propose(self, ctx, instance):
        v = self.value(instance)
        ctx.invoke("propose", instance=instance, value=v)
        self.outer = eic_to_ec_propose(self.outer, instance)
        self.eic, seq = eic_from_ec_propose(self.eic, instance, v)
        self.ec.propose(ctx, instance, seq)

    def on_receive(self, ctx, src, msg):
        self.ec.receive(src, msg)

    def on_timeout(self, ctx):
        decision = self.ec.timeout(ctx.fd)
        if not decision:
            return
        self.eic, upcalls = eic_from_ec_response(self.eic, *decision)
        decided = None
        for k, v in upcalls:
            ctx.output("decide-eic", instance=k, value=v)
            self.outer, out = eic_to_ec_response(self.outer, k, v)
            if out:
                decided = out
                ctx.output("decide", instance=out[0], value=out[1])
        if decided and decided[0] < self.instances:
            self.propose(ctx, decided[0] + 1)

    def snapshot(self):
        return (self.outer.count, len(self.outer.decided), self.eic.decisions) + self.ec.snapshot()


# -- registry -----------------------------------------------------------------


def broadcast_inputs(scenario: Scenario, seed: int):
    return [(b.tick, b.pid, ("broadcast", b.payload))
            for b in scenario.workload.broadcast_schedule(scenario.n, seed)]


def consensus_inputs(scenario: Scenario, seed: int):
    w = scenario.workload
    if w.instances <= 0:
        return []
    return [(w.start, p, ("start",)) for p in range(1, scenario.n + 1)]


@dataclass(frozen=True)
class StackSpec:
    name: str
    factory: Callable
    inputs: Callable
    suites: tuple[str, ...]
    default_checks: tuple[str, ...]
    tracks_hops: bool = False


STACKS: dict[str, StackSpec] = {}


def register_stack(spec: StackSpec) -> None:
    STACKS[spec.name] = spec


def get_stack(name: str) -> StackSpec:
    try:
        return STACKS[name]
    except KeyError:
        raise ConfigError(f"unknown stack {name!r}; choose from {sorted(STACKS)}") from None


for _spec in (
    StackSpec("etob-direct", EtobDirectNode, broadcast_inputs,
              ("etob", "tob", "causal", "latency"), ("etob", "causal"), tracks_hops=True),
    StackSpec("ec-omega", EcOmegaNode, consensus_inputs, ("ec",), ("ec",)),
    StackSpec("ec-to-etob", EcToEtobNode, broadcast_inputs, ("etob", "tob", "causal"), ("etob",)),
    StackSpec("etob-to-ec", EtobToEcNode, consensus_inputs, ("ec",), ("ec",)),
    StackSpec("eic-from-ec", EicFromEcNode, consensus_inputs, ("eic",), ("eic",)),
    StackSpec("eic-roundtrip", EicRoundtripNode, consensus_inputs, ("ec",), ("ec",)),
):
    register_stack(_spec)

PROTOCOL_STACKS = tuple(STACKS)
