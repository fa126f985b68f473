from __future__ import annotations

import functools

import pytest

from eclab.scenario import load_scenario
from eclab.sim import run_simulation

# criterion number -> (passed, description); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def bundled_trace(name: str, stack: str, seed: int | None = None):
    """Cached run of a bundled scenario; callers must not mutate the trace."""
    return run_simulation(load_scenario(name), stack, seed)


@pytest.fixture
def trace_of():
    return bundled_trace


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
