"""Three-valued verdicts shared by the checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

SATISFIED = "satisfied"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

_RANK = {SATISFIED: 0, INCONCLUSIVE: 1, VIOLATED: 2}


@dataclass
class Verdict:
    """Outcome of checking one property clause or a whole suite.

    ``witness`` is the stabilization time (or instance) found for eventual
    clauses. ``counterexample`` holds structured evidence: the violation for
    violated/inconclusive clauses, and for satisfied eventual clauses with a
    positive witness, the violation just before the witness that proves it
    minimal.
    """

    name: str
    status: str
    witness: int | None = None
    counterexample: dict[str, Any] | None = None
    clauses: list["Verdict"] = field(default_factory=list)

    def __post_init__(self):
        if self.status not in _RANK:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == VIOLATED and not self.clauses and self.counterexample is None:
            raise ValueError(f"violated verdict {self.name!r} needs a counterexample")

    @property
    def ok(self) -> bool:
        return self.status == SATISFIED

    def clause(self, name: str) -> "Verdict":
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "status": self.status}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        if self.clauses:
            out["clauses"] = [c.to_dict() for c in self.clauses]
        return out


def worst(statuses: Iterable[str]) -> str:
    return max(statuses, key=_RANK.__getitem__, default=SATISFIED)


def combine(name: str, clauses: list[Verdict], witness: int | None = None) -> Verdict:
    return Verdict(name, worst(c.status for c in clauses), witness=witness, clauses=clauses)


def exit_code(verdicts: Iterable[Verdict]) -> int:
    status = worst(v.status for v in verdicts)
    return {SATISFIED: 0, VIOLATED: 1, INCONCLUSIVE: 2}[status]
