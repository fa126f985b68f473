import copy
from collections import Counter

import pytest

from eclab.mutations import GOLDEN_SUITES, MUTATIONS, detect, golden_targets, run_suite
from eclab.verdict import SATISFIED, VIOLATED


@pytest.fixture(scope="module")
def golden():
    return golden_targets()


def test_golden_histories_are_clean(golden):
    for family, suites in GOLDEN_SUITES.items():
        for suite in suites:
            assert run_suite(suite, golden[family]).status == SATISFIED, (family, suite)


def test_corpus_covers_every_clause_twice():
    per_clause = Counter((m.family, m.clause) for m in MUTATIONS)
    assert all(c >= 2 for c in per_clause.values())
    broadcast = {c for f, c in per_clause if f == "broadcast"}
    assert broadcast == {"validity", "no-creation", "no-duplication", "agreement", "stability", "total-order"}
    for fam in ("ec", "eic"):
        assert {c for f, c in per_clause if f == fam} == {"termination", "integrity", "validity", "agreement"}
    assert len({(m.family, m.name) for m in MUTATIONS}) == len(MUTATIONS)


@pytest.mark.parametrize("mutation", MUTATIONS, ids=lambda m: f"{m.family}-{m.name}")
def test_mutation_detected_with_evidence(golden, mutation):
    before = copy.deepcopy(golden[mutation.family])
    results = detect(mutation, golden[mutation.family])
    assert results
    for d in results:
        assert d.detected, (d.suite, d.clause)
    # planting works on a copy; the golden history is untouched
    assert run_suite(GOLDEN_SUITES[mutation.family][0], golden[mutation.family]).status == SATISFIED
    assert before == golden[mutation.family]


def test_safety_mutations_are_violated(golden):
    for m in MUTATIONS:
        if m.clause in ("no-creation", "no-duplication", "validity") and m.family != "causal":
            planted = m.plant(golden[m.family])
            for suite, expect in planted.expect.items():
                if expect.clause in ("no-creation", "no-duplication"):
                    assert expect.status == VIOLATED
