"""Scenario configuration: failure pattern, oracle specs, workload, timing.

Scenarios are plain frozen dataclasses. They can be built in code or
loaded from TOML files; the bundled corpus lives in ``eclab/scenarios``.
"""

from __future__ import annotations

import dataclasses
import random
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .errors import ConfigError

PRESTABLE_MODES = ("seeded", "self", "table")
VALUE_MODES = ("distinct", "binary")
# Anything above this many ticks is a typo, not an experiment.
MAX_HORIZON = 1_000_000


@dataclass(frozen=True)
class FailurePattern:
    """Crash times per process; a process crashed at t takes no step at t or later."""

    n: int
    crash_time: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"need at least 2 processes, got n={self.n}")
        for p, t in self.crash_time.items():
            if not 1 <= p <= self.n:
                raise ConfigError(f"crash entry for unknown process {p}")
            if t < 0:
                raise ConfigError(f"negative crash time for process {p}")

    @property
    def processes(self) -> range:
        return range(1, self.n + 1)

    def alive(self, p: int, t: int) -> bool:
        ct = self.crash_time.get(p)
        return ct is None or t < ct

    def crashed(self, t: int) -> frozenset[int]:
        return frozenset(p for p, ct in self.crash_time.items() if ct <= t)

    @property
    def faulty(self) -> frozenset[int]:
        return frozenset(self.crash_time)

    @property
    def correct(self) -> frozenset[int]:
        return frozenset(p for p in self.processes if p not in self.crash_time)


def failure_sets(F: FailurePattern, t: int):
    """Return ``((alive, crashed), (correct, faulty))`` at tick ``t``."""
    crashed = F.crashed(t)
    alive = frozenset(F.processes) - crashed
    return (alive, crashed), (F.correct, F.faulty)


@dataclass(frozen=True)
class OmegaSpec:
    """Leader oracle generator.

    Before ``tau`` every process gets a prestable leader chosen by ``prestable``:
    ``seeded`` draws one per (process, tick), ``self`` makes everyone trust
    itself, ``table`` reads ``leaders`` (pid -> leader, default least alive).
    ``overrides`` pins single (pid, tick) samples and wins over every mode.
    From ``tau`` on every process outputs the least-index correct process.
    """

    tau: int = 0
    prestable: str = "seeded"
    leaders: Mapping[int, int] = field(default_factory=dict)
    overrides: Mapping[tuple[int, int], int] = field(default_factory=dict)
    allow_dead_prestable: bool = False
    seed: int = 0


@dataclass(frozen=True)
class SigmaSpec:
    """Quorum oracle generator: seeded majorities before ``tau``, correct(F) after."""

    tau: int = 0
    seed: int = 0


@dataclass(frozen=True)
class Broadcast:
    tick: int
    pid: int
    payload: str


@dataclass(frozen=True)
class Workload:
    """Application inputs.

    Broadcast-style stacks use ``broadcasts`` plus, when ``rate`` > 0, a
    seeded stream of extra broadcasts up to tick ``until``. Consensus-style
    stacks run ``instances`` consecutive instances per process starting at
    tick ``start``; proposal values are ``distinct`` per (process, instance)
    or seeded bits (``binary``).
    """

    broadcasts: tuple[Broadcast, ...] = ()
    rate: float = 0.0
    until: int = 0
    instances: int = 0
    start: int = 0
    values: str = "distinct"

    def broadcast_schedule(self, n: int, seed: int) -> list[Broadcast]:
        """Explicit and generated broadcasts sorted by (tick, pid)."""
        out = list(self.broadcasts)
        if self.rate > 0:
            rng = random.Random(f"workload:{seed}")
            counter = 0
            for t in range(self.until + 1):
                for p in range(1, n + 1):
                    if rng.random() < self.rate:
                        counter += 1
                        out.append(Broadcast(t, p, f"r{counter}"))
        out.sort(key=lambda b: (b.tick, b.pid))
        return out

    def proposal_value(self, pid: int, instance: int, seed: int):
        if self.values == "binary":
            return random.Random(f"value:{seed}:{pid}:{instance}").randrange(2)
        return f"v{pid}.{instance}"

    @property
    def last_injection(self) -> int:
        ticks = [b.tick for b in self.broadcasts]
        if self.rate > 0:
            ticks.append(self.until)
        if self.instances:
            ticks.append(self.start)
        return max(ticks, default=-1)


@dataclass(frozen=True)
class Scenario:
    n: int
    horizon: int
    delta_c: int = 1
    delta_t: int = 1
    crash_time: Mapping[int, int] = field(default_factory=dict)
    omega: OmegaSpec = field(default_factory=OmegaSpec)
    sigma: SigmaSpec | None = None
    workload: Workload = field(default_factory=Workload)
    seed: int = 0
    fifo: bool = False
    name: str = ""

    @property
    def failure_pattern(self) -> FailurePattern:
        return FailurePattern(self.n, dict(self.crash_time))

    @property
    def quiet_window(self) -> int:
        """Quiescence window used by the checkers."""
        return 2 * (self.delta_c + self.delta_t)

    def with_seed(self, seed: int) -> "Scenario":
        """Copy whose run seed and oracle seeds are all ``seed``."""
        sigma = dataclasses.replace(self.sigma, seed=seed) if self.sigma else None
        return dataclasses.replace(
            self, seed=seed, omega=dataclasses.replace(self.omega, seed=seed), sigma=sigma
        )

    def validate(self) -> None:
        F = self.failure_pattern
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.horizon > MAX_HORIZON:
            raise ConfigError(f"horizon {self.horizon} exceeds {MAX_HORIZON}")
        if self.delta_c < 1 or self.delta_t < 1:
            raise ConfigError("delta_c and delta_t must be at least 1")
        if not F.correct:
            raise ConfigError("every process crashes; at least one must be correct")
        if self.workload.last_injection >= self.horizon:
            raise ConfigError("horizon must exceed the last injection tick")
        _validate_omega(self.omega, self.n)
        if self.sigma is not None:
            _validate_sigma(self.sigma, F)
        if self.workload.values not in VALUE_MODES:
            raise ConfigError(f"unknown value mode {self.workload.values!r}")
        for b in self.workload.broadcasts:
            if not 1 <= b.pid <= self.n or b.tick < 0:
                raise ConfigError(f"bad broadcast entry {b}")


def _validate_omega(spec: OmegaSpec, n: int) -> None:
    if spec.prestable not in PRESTABLE_MODES:
        raise ConfigError(f"unknown prestable mode {spec.prestable!r}")
    if spec.tau < 0:
        raise ConfigError("omega tau must be non-negative")
    ids = list(spec.leaders.items()) + [(p, q) for (p, _), q in spec.overrides.items()]
    for p, q in ids:
        if not (1 <= p <= n and 1 <= q <= n):
            raise ConfigError(f"omega table entry {p}->{q} outside 1..{n}")


def _validate_sigma(spec: SigmaSpec, F: FailurePattern) -> None:
    # correct(F) must meet every majority, i.e. be more than n minus a majority.
    majority = F.n // 2 + 1
    if len(F.correct) <= F.n - majority:
        raise ConfigError(
            f"sigma needs correct processes to intersect every majority; "
            f"{len(F.correct)} of {F.n} correct"
        )


# -- randomized scenarios ---------------------------------------------------


def random_scenario(rng: random.Random, max_n: int = 5, name: str = "random") -> Scenario:
    """Draw an admissible scenario whose horizon leaves room to settle.

    The horizon covers the oracle's stabilization, the last injection and
    every consensus instance at a generous per-instance cost, plus several
    quiescence windows, so liveness clauses can normally be decided.
    Consensus workloads run enough instances that the last ones are decided
    after the oracle stabilizes; eventual agreement is unobservable otherwise.
    Links are FIFO whenever delays can exceed one timer period plus a tick.
    """
    n = rng.randint(2, max_n)
    delta_c = rng.randint(1, 3)
    delta_t = rng.randint(1, 3)
    tau = rng.randint(0, 40)
    until = rng.randint(5, 40)
    instances = tau // delta_t + rng.randint(3, 10)
    n_crash = rng.randint(0, n - 1)
    victims = rng.sample(range(1, n + 1), n_crash)
    crash_time = {p: rng.randint(0, max(tau, until)) for p in sorted(victims)}
    prestable = rng.choice(PRESTABLE_MODES)
    leaders = {p: rng.randint(1, n) for p in range(1, n + 1)} if prestable == "table" else {}
    omega = OmegaSpec(tau=tau, prestable=prestable, leaders=leaders,
                      allow_dead_prestable=rng.random() < 0.3)
    correct = n - n_crash
    sigma = SigmaSpec(tau=tau) if correct > n - (n // 2 + 1) and rng.random() < 0.5 else None
    workload = Workload(rate=rng.uniform(0.03, 0.25), until=until, instances=instances,
                        start=rng.randint(0, 5), values=rng.choice(VALUE_MODES))
    window = 2 * (delta_c + delta_t)
    horizon = max(tau, until) + instances * (2 * delta_c + 2 * delta_t) + 6 * window + 20
    return Scenario(n=n, horizon=horizon, delta_c=delta_c, delta_t=delta_t, crash_time=crash_time,
                    omega=omega, sigma=sigma, workload=workload, seed=rng.randrange(2**31),
                    fifo=delta_c > delta_t + 1, name=name)


# -- loading --------------------------------------------------------------


def bundled_names() -> list[str]:
    root = resources.files("eclab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario from a TOML path or by bundled name."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text()
    elif str(ref) in bundled_names():
        text = (resources.files("eclab") / "scenarios" / f"{ref}.toml").read_text()
    else:
        raise ConfigError(f"no scenario file or bundled scenario named {ref!r}")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{ref}: {exc}") from exc
    return scenario_from_dict(data, default_name=path.stem)


def _int_keys(table: Mapping[str, Any], what: str) -> dict[int, int]:
    try:
        return {int(k): int(v) for k, v in table.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: keys and values must be integers") from exc


def _take(data: dict, key: str, default, kind):
    value = data.pop(key, default)
    if value is not None and not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise ConfigError(f"{key!r} should be {kind.__name__}, got {value!r}")
    return value


def scenario_from_dict(data: Mapping[str, Any], default_name: str = "") -> Scenario:
    data = dict(data)
    try:
        n = _take(data, "n", None, int)
        horizon = _take(data, "horizon", None, int)
        if n is None or horizon is None:
            raise ConfigError("scenario needs 'n' and 'horizon'")
        seed = _take(data, "seed", 0, int)
        crash = _int_keys(data.pop("crash", {}), "crash")

        om = dict(data.pop("omega", {}))
        overrides = {}
        for entry in om.pop("overrides", []):
            overrides[(int(entry["pid"]), int(entry["tick"]))] = int(entry["leader"])
        omega = OmegaSpec(
            tau=_take(om, "tau", 0, int),
            prestable=_take(om, "prestable", "seeded", str),
            leaders=_int_keys(om.pop("leaders", {}), "omega.leaders"),
            overrides=overrides,
            allow_dead_prestable=_take(om, "allow_dead_prestable", False, bool),
            seed=seed,
        )
        if om:
            raise ConfigError(f"unknown omega keys: {sorted(om)}")

        sigma = None
        if "sigma" in data:
            sg = dict(data.pop("sigma"))
            sigma = SigmaSpec(tau=_take(sg, "tau", 0, int), seed=seed)
            if sg:
                raise ConfigError(f"unknown sigma keys: {sorted(sg)}")

        wl = dict(data.pop("workload", {}))
        broadcasts = tuple(
            Broadcast(int(b["t"]), int(b["p"]), str(b["payload"])) for b in wl.pop("broadcasts", [])
        )
        workload = Workload(
            broadcasts=broadcasts,
            rate=float(wl.pop("rate", 0.0)),
            until=_take(wl, "until", 0, int),
            instances=_take(wl, "instances", 0, int),
            start=_take(wl, "start", 0, int),
            values=_take(wl, "values", "distinct", str),
        )
        if wl:
            raise ConfigError(f"unknown workload keys: {sorted(wl)}")

        scenario = Scenario(
            n=n,
            horizon=horizon,
            delta_c=_take(data, "delta_c", 1, int),
            delta_t=_take(data, "delta_t", 1, int),
            crash_time=crash,
            omega=omega,
            sigma=sigma,
            workload=workload,
            seed=seed,
            fifo=_take(data, "fifo", False, bool),
            name=_take(data, "name", default_name, str),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed scenario: {exc!r}") from exc
    if data:
        raise ConfigError(f"unknown scenario keys: {sorted(data)}")
    FailurePattern(scenario.n, dict(scenario.crash_time))
    scenario.validate()
    return scenario
