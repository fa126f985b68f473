import pytest
from hypothesis import given
from hypothesis import strategies as st

from eclab.errors import ProtocolError
from eclab.oracles import FdHistory, omega_output, sigma_output, stable_leader, validate_history
from eclab.scenario import FailurePattern, OmegaSpec, SigmaSpec
from eclab.verdict import SATISFIED, VIOLATED


def test_stable_leader_without_crashes():
    assert omega_output(OmegaSpec(tau=0), FailurePattern(3), 2, 5) == 1


def test_stable_leader_skips_crashed():
    F = FailurePattern(3, {1: 10})
    # oracle: least index among the processes that never crash
    expected = min(p for p in F.processes if p not in {1})
    assert omega_output(OmegaSpec(tau=20), F, 3, 25) == expected == 2


def test_prestable_table_lookup():
    spec = OmegaSpec(tau=8, prestable="table", overrides={(2, 3): 2})
    assert omega_output(spec, FailurePattern(3), 2, 3) == 2


def test_prestable_names_alive_process():
    F = FailurePattern(4, {1: 0, 2: 3})
    spec = OmegaSpec(tau=50, prestable="seeded", seed=3)
    for t in range(50):
        for p in (3, 4):
            assert F.alive(omega_output(spec, F, p, t), t)


def test_crashed_query_is_a_contract_violation():
    with pytest.raises(ProtocolError):
        omega_output(OmegaSpec(), FailurePattern(3, {2: 4}), 2, 4)
    with pytest.raises(ProtocolError):
        sigma_output(SigmaSpec(), FailurePattern(3, {2: 4}), 2, 9)


def test_disagreeing_leaders_exist():
    F = FailurePattern(3)
    spec = OmegaSpec(tau=30, prestable="self")
    outs = {omega_output(spec, F, p, 5) for p in F.processes}
    assert outs == {1, 2, 3}
    seeded = OmegaSpec(tau=30, prestable="seeded", seed=1)
    assert any(len({omega_output(seeded, F, p, t) for p in F.processes}) > 1 for t in range(30))


def test_sigma_after_stabilization():
    assert sigma_output(SigmaSpec(tau=0), FailurePattern(3), 1, 4) == {1, 2, 3}
    F = FailurePattern(5, {4: 0, 5: 0})
    assert sigma_output(SigmaSpec(tau=2), F, 1, 7) <= {1, 2, 3}


def test_sigma_two_queries_intersect():
    F = FailurePattern(3)
    spec = SigmaSpec(tau=5, seed=9)
    assert sigma_output(spec, F, 1, 2) & sigma_output(spec, F, 3, 9)


def _omega_history(spec, F, horizon):
    h = FdHistory("omega")
    for t in range(horizon):
        for p in F.processes:
            if F.alive(p, t):
                h.record(p, t, omega_output(spec, F, p, t))
    return h


def _sigma_history(spec, F, horizon):
    h = FdHistory("sigma")
    for t in range(horizon):
        for p in F.processes:
            if F.alive(p, t):
                h.record(p, t, sigma_output(spec, F, p, t))
    return h


patterns = st.integers(2, 6).flatmap(lambda n: st.tuples(
    st.just(n), st.dictionaries(st.integers(1, n), st.integers(0, 40), max_size=n - 1)))


@given(patterns, st.integers(0, 40), st.sampled_from(["seeded", "self", "table"]), st.integers(0, 99))
def test_generated_omega_histories_validate(pattern, tau, mode, seed):
    F = FailurePattern(*pattern)
    spec = OmegaSpec(tau=tau, prestable=mode, seed=seed)
    assert validate_history(_omega_history(spec, F, 60), F, tau).status == SATISFIED


@given(patterns, st.integers(0, 40), st.integers(0, 99))
def test_generated_sigma_histories_validate(pattern, tau, seed):
    n, crashes = pattern
    F = FailurePattern(n, crashes)
    if len(F.correct) <= n - (n // 2 + 1):
        return
    spec = SigmaSpec(tau=tau, seed=seed)
    assert validate_history(_sigma_history(spec, F, 60), F, tau).status == SATISFIED


def test_omega_mutation_detected():
    F = FailurePattern(3, {3: 5})
    h = _omega_history(OmegaSpec(tau=20), F, 40)
    h.samples[(2, 25)] = 3
    v = validate_history(h, F, 20)
    assert v.status == VIOLATED
    assert (v.counterexample["pid"], v.counterexample["tick"]) == (2, 25)


def test_sigma_disjoint_pair_detected():
    F = FailurePattern(4)
    h = FdHistory("sigma", {(1, 0): frozenset({1, 2}), (3, 4): frozenset({3, 4})})
    v = validate_history(h, F, 0)
    assert v.status == VIOLATED
    assert v.counterexample["first"]["quorum"] == [1, 2]
    assert v.counterexample["second"]["quorum"] == [3, 4]


def test_stable_leader_helper():
    assert stable_leader(FailurePattern(4, {1: 3})) == 2
