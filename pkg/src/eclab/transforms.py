"""Black-box transformations between the consensus and broadcast abstractions.

* consensus -> broadcast: each instance agrees on the whole delivered
  sequence, extended with a batch of newly pushed messages.
* broadcast -> consensus: proposals are broadcast as ``(instance, value)``
  and a process decides the first value delivered for its instance.
* consensus -> irrevocable consensus: each instance agrees on the whole
  vector of decisions so far, so earlier entries may be revised.
* irrevocable -> consensus: decide the first response for the current
  instance and ignore later revisions.

Instances are numbered from 1 everywhere. Transitions are pure; each
returns the new state plus whatever the caller must act on (messages to
send, a proposal to hand to the lower layer, upcalls).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ProtocolError
from .etob import AppMessage, fmt_id


def new_batch(d, to_deliver) -> tuple[AppMessage, ...]:
    """Messages of ``to_deliver`` missing from ``d``, in ascending id order."""
    present = {m.id for m in d}
    batch = tuple(sorted((m for m in to_deliver if m.id not in present), key=lambda m: m.id))
    assert not present & {m.id for m in batch}
    return batch


# -- consensus -> broadcast ------------------------------------------------


@dataclass(frozen=True)
class Push:
    message: AppMessage

    def wire(self) -> str:
        return f"push{{m={fmt_id(self.message.id)}}}"

    def carries(self):
        return (self.message.id,)


@dataclass(frozen=True)
class EcToEtobState:
    pid: int
    n: int
    d: tuple[AppMessage, ...] = ()
    to_deliver: frozenset[AppMessage] = frozenset()
    count: int = 0
    next_seq: int = 1


def ec_to_etob_broadcast(state: EcToEtobState, payload):
    m = AppMessage((state.pid, state.next_seq), payload)
    msg = Push(m)
    return replace(state, next_seq=state.next_seq + 1), m, [(q, msg) for q in range(1, state.n + 1)]


def ec_to_etob_push(state: EcToEtobState, m: AppMessage) -> EcToEtobState:
    if m in state.to_deliver:
        return state
    return replace(state, to_deliver=state.to_deliver | {m})


def ec_to_etob_response(state: EcToEtobState, instance: int, decided):
    """Adopt a consensus response and return ``(state, (next_instance, proposal))``."""
    if instance != state.count:
        raise ProtocolError(f"response for instance {instance} while count={state.count}")
    d = tuple(decided)
    count = state.count + 1
    proposal = d + new_batch(d, state.to_deliver)
    return replace(state, d=d, count=count), (count, proposal)


def ec_to_etob_timeout(state: EcToEtobState):
    """Bootstrap the first instance; returns ``(state, proposal or None)``."""
    if state.count != 0:
        return state, None
    return replace(state, count=1), (1, new_batch(state.d, state.to_deliver))


# -- broadcast -> consensus ------------------------------------------------


def first_for_instance(d, instance: int):
    """Value of the earliest ``(instance, v)`` pair in ``d``, or None."""
    for item in d:
        pair = item.payload if isinstance(item, AppMessage) else item
        if pair[0] == instance:
            return pair[1]
    return None


@dataclass(frozen=True)
class EtobToEcState:
    count: int = 0
    decided: frozenset[int] = frozenset()


def etob_to_ec_propose(state: EtobToEcState, instance: int, value):
    """Return the new state and the payload to broadcast."""
    if instance != state.count + 1:
        raise ProtocolError(f"proposed instance {instance} with count={state.count}")
    return replace(state, count=instance), (instance, value)


def etob_to_ec_timeout(state: EtobToEcState, d):
    """Decide the current instance from the delivered sequence ``d`` if possible."""
    if state.count == 0 or state.count in state.decided:
        return state, None
    value = first_for_instance(d, state.count)
    if value is None:
        return state, None
    return replace(state, decided=state.decided | {state.count}), (state.count, value)


# -- consensus -> irrevocable consensus ----------------------------------


@dataclass(frozen=True)
class EicState:
    decisions: tuple = ()
    count: int = 0


def eic_from_ec_propose(state: EicState, instance: int, value):
    """Return the new state and the sequence to propose to consensus ``instance``."""
    if instance != state.count + 1:
        raise ProtocolError(f"proposed instance {instance} with count={state.count}")
    if len(state.decisions) != instance - 1:
        raise ProtocolError("proposal before the previous response arrived")
    return replace(state, count=instance), state.decisions + (value,)


def eic_from_ec_response(state: EicState, instance: int, decided):
    """Adopt a consensus response; return ``(state, [(index, value), ...])`` revisions."""
    decided = tuple(decided)
    if len(decided) < instance:
        raise ProtocolError(f"response of length {len(decided)} for instance {instance}")
    upcalls = []
    for k in range(1, instance + 1):
        old = state.decisions[k - 1] if k <= len(state.decisions) else None
        if decided[k - 1] != old:
            upcalls.append((k, decided[k - 1]))
    return replace(state, decisions=decided), upcalls


# -- irrevocable -> consensus ----------------------------------------------


@dataclass(frozen=True)
class EcFromEicState:
    count: int = 0
    decided: frozenset[int] = frozenset()


def eic_to_ec_propose(state: EcFromEicState, instance: int):
    if instance != state.count + 1:
        raise ProtocolError(f"proposed instance {instance} with count={state.count}")
    return replace(state, count=instance)


def eic_to_ec_response(state: EcFromEicState, instance: int, value):
    """First response for the current instance becomes the decision."""
    if instance != state.count or instance in state.decided:
        return state, None
    return replace(state, decided=state.decided | {instance}), (instance, value)
