"""Line-oriented trace serialization.

Every line starts with ``t=<tick> p=<pid> kind=<kind>`` followed by
kind-specific fields in a fixed order, so traces diff cleanly and can be
compared byte for byte.
"""

from __future__ import annotations

from .ec import fmt_value
from .etob import fmt_id
from .sim import Trace


def _fmt_field(key: str, value) -> str:
    if key == "id":
        return fmt_id(value)
    if key == "d":
        return "[" + ",".join(fmt_id(i) for i in value) + "]"
    if key == "hops":
        return ",".join(f"{fmt_id(mid)}:{h}:{c}" for mid, h, c in value) or "-"
    return fmt_value(value)


def _fields(data: dict) -> str:
    return " ".join(f"{k}={_fmt_field(k, v)}" for k, v in data.items())


def trace_lines(trace: Trace):
    for kind, item in trace.log:
        if kind == "crash":
            t, p = item
            yield f"t={t} p={p} kind=crash"
        elif kind == "step":
            s = item
            line = f"t={s.time} p={s.pid} kind=step idx={s.index} via={s.via} fd={s.fd}"
            if trace.sigma_history is not None:
                q = trace.sigma_history.samples[(s.pid, s.time)]
                line += " sigma=[" + ",".join(map(str, sorted(q))) + "]"
            # the digest is filled in after the handler ran, so it reflects the new state
            yield line + f" digest={s.digest}"
        elif kind == "recv":
            m = item
            yield f"t={m.deliver_at} p={m.dst} kind=recv idx={m.received_step} msg={m.uid} from={m.src} sent={m.sent_at}"
        elif kind == "send":
            m = item
            yield (f"t={m.sent_at} p={m.src} kind=send idx={m.step} msg={m.uid} to={m.dst} "
                   f"arrive={m.deliver_at} body={m.body.wire()}")
        elif kind == "drop":
            t, m = item
            yield f"t={t} p={m.dst} kind=drop msg={m.uid} from={m.src}"
        elif kind in ("input", "output"):
            r = item
            tail = _fields(r.data)
            yield f"t={r.time} p={r.pid} kind={kind} idx={r.step} op={r.op}" + (f" {tail}" if tail else "")
        else:  # pragma: no cover - log kinds are closed
            raise ValueError(f"unknown log entry {kind!r}")


def format_trace(trace: Trace) -> str:
    sc = trace.scenario
    header = (f"# scenario={sc.name or '-'} stack={trace.stack} seed={trace.seed} n={sc.n} "
              f"horizon={sc.horizon} delta_c={sc.delta_c} delta_t={sc.delta_t}")
    return "\n".join([header, *trace_lines(trace)]) + "\n"
