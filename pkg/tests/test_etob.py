import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eclab.errors import ProtocolError
from eclab.etob import (
    AppMessage,
    CausalGraph,
    EtobState,
    Promote,
    Update,
    handle_broadcast,
    handle_promote,
    handle_timeout,
    handle_update,
    update_promote,
)

A = AppMessage((1, 1), "A")
B = AppMessage((1, 2), "B")
C = AppMessage((2, 1), "C")


def test_update_promote_forced_by_edge():
    assert update_promote((), CausalGraph(frozenset({A, B}), frozenset({(A.id, B.id)}))) == (A, B)


def test_update_promote_least_id_tiebreak():
    cg = CausalGraph(frozenset({A, B, C}), frozenset({(A.id, B.id)}))
    assert B.id < C.id
    assert update_promote((A,), cg) == (A, B, C)


def test_update_promote_identity():
    cg = CausalGraph(frozenset({A, B}), frozenset({(A.id, B.id)}))
    assert update_promote((A, B), cg) == (A, B)


def test_update_promote_rejects_cycle():
    cg = CausalGraph(frozenset({A, B}), frozenset({(A.id, B.id), (B.id, A.id)}))
    with pytest.raises(ProtocolError):
        update_promote((), cg)


def _oracle_order(prefix, nodes, edges):
    """Lexicographically least id sequence among all topological extensions."""
    rest = sorted(m.id for m in nodes if m not in prefix)
    best = None
    for perm in itertools.permutations(rest):
        pos = {m.id: i for i, m in enumerate(prefix)}
        pos.update({mid: len(prefix) + i for i, mid in enumerate(perm)})
        if all(pos[a] < pos[b] for a, b in edges):
            if best is None or perm < best:
                best = perm
    return best


@st.composite
def dags(draw):
    ids = draw(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3)), min_size=1, max_size=6, unique=True))
    order = draw(st.permutations(ids))
    rank = {m: i for i, m in enumerate(order)}
    edges = {(a, b) for a in ids for b in ids if rank[a] < rank[b] and draw(st.booleans())}
    nodes = frozenset(AppMessage(m, None) for m in ids)
    return CausalGraph(nodes, frozenset(edges)), order


@settings(max_examples=150)
@given(dags(), st.data())
def test_update_promote_matches_permutation_oracle(graph, data):
    cg, order = graph
    # a prefix that is itself closed under predecessors
    cut = data.draw(st.integers(0, len(order)))
    prefix_ids = order[:cut]
    prefix = tuple(update_promote((), CausalGraph(
        frozenset(m for m in cg.nodes if m.id in prefix_ids),
        frozenset(e for e in cg.edges if e[0] in prefix_ids and e[1] in prefix_ids))))
    result = update_promote(prefix, cg)
    assert result[: len(prefix)] == prefix
    assert tuple(m.id for m in result[len(prefix):]) == _oracle_order(prefix, cg.nodes, cg.edges)
    assert set(result) == set(cg.nodes) and len(result) == len(cg.nodes)


def test_broadcast_examples():
    s = EtobState(1, 3)
    s, a, sends = handle_broadcast(s, "A", deps=set())
    assert s.cg.ids() == {a.id} and len(sends) == 3
    assert all(isinstance(m, Update) and m.cg == s.cg for _, m in sends)
    assert sorted(q for q, _ in sends) == [1, 2, 3]
    s, b, _ = handle_broadcast(s, "B", deps={a.id})
    assert (a.id, b.id) in s.cg.edges
    assert (a.id, b.id) == ((1, 1), (1, 2))


def test_broadcast_default_deps_is_whole_past():
    s = EtobState(2, 2)
    s = handle_update(s, CausalGraph(frozenset({A, B})))
    s, m, _ = handle_broadcast(s, "x")
    assert {(A.id, m.id), (B.id, m.id)} <= s.cg.edges


def test_broadcast_rejects_unknown_deps():
    with pytest.raises(ProtocolError):
        handle_broadcast(EtobState(1, 2), "x", deps={(9, 9)})


def test_update_examples():
    s = handle_update(EtobState(1, 2), CausalGraph(frozenset({A})))
    assert s.promote == (A,)
    s2 = handle_update(s, CausalGraph(frozenset({C})))
    assert s2.promote == (A, C)
    assert handle_update(s2, s2.cg) is s2


def test_promote_examples():
    s = EtobState(2, 3)
    assert handle_promote(s, (A, B), sender=1, fd=1).d == (A, B)
    assert handle_promote(s, (A, B), sender=2, fd=1).d == ()
    s = handle_promote(handle_promote(s, (A,), 1, 1), (A, B), 1, 1)
    assert s.d == (A, B)


def test_timeout_examples():
    s = EtobState(1, 3, promote=(A,))
    sends = handle_timeout(s, fd=1)
    assert len(sends) == 3 and all(m == Promote((A,)) for _, m in sends)
    assert handle_timeout(s, fd=2) == []
    assert [m.seq for _, m in handle_timeout(EtobState(1, 2), 1)] == [(), ()]


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(["bcast", "update"]), st.integers(1, 3)), max_size=25))
def test_promote_grows_by_prefix_and_respects_edges(events):
    states = {p: EtobState(p, 3) for p in (1, 2, 3)}
    for kind, p in events:
        before = states[p].promote
        if kind == "bcast":
            states[p], _, _ = handle_broadcast(states[p], "x")
            states[p] = handle_update(states[p], states[p].cg)
        else:
            other = states[p % 3 + 1]
            states[p] = handle_update(states[p], other.cg)
        s = states[p]
        assert s.promote[: len(before)] == before
        assert set(s.promote) == set(s.cg.nodes)
        pos = {m.id: i for i, m in enumerate(s.promote)}
        assert all(pos[a] < pos[b] for a, b in s.cg.edges)
