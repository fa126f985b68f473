import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eclab import chtlab
from eclab.chtlab import BOT, FdDag
from eclab.errors import BudgetExceeded
from eclab.verdict import INCONCLUSIVE, SATISFIED, VIOLATED


def _build(n=2, q=3, omega="disagreeing", **kw):
    return chtlab.build_fd_dag(chtlab.dag_scenario(n, q, omega), q, **kw)


# -- DAG --------------------------------------------------------------------------


def test_two_processes_share_six_vertex_dag():
    build = _build(2, 3)
    assert build.dags[1] == build.dags[2]
    assert len(build.dags[1].vertices) == 6


def test_lone_process_gets_a_tournament():
    build = _build(2, 4, exchange=False)
    G = build.dags[1]
    own = sorted(G.vertices, key=lambda v: v[2])
    assert [v[2] for v in own] == [1, 2, 3, 4] and {v[0] for v in own} == {1}
    assert G.edges == {(a, b) for i, a in enumerate(own) for b in own[i + 1:]}


@pytest.mark.parametrize("omega", ["disagreeing", "constant", "seeded"])
def test_vertex_count_bounded_by_queries(omega):
    build = _build(3, 4, omega)
    for G in build.dags.values():
        counts = {}
        for q, _, _ in G.vertices:
            counts[q] = counts.get(q, 0) + 1
        assert all(c <= 4 for c in counts.values())


def test_built_dag_properties_hold():
    build = _build(3, 4, "seeded")
    for p, G in build.dags.items():
        v = chtlab.check_dag_properties(G, build.failure_pattern, build.history, build.times, build.snapshots[p])
        assert [c.status for c in v.clauses[:4]] == [SATISFIED] * 4


def test_deleting_a_transitive_edge_is_caught():
    build = _build(2, 3)
    G = build.dags[1]
    # an edge with an intermediate vertex, so it is implied by transitivity
    a, c = next((a, c) for a, c in sorted(G.edges) if any((a, b) in G.edges and (b, c) in G.edges
                                                           for b in G.vertices))
    broken = FdDag(G.vertices, G.edges - {(a, c)})
    v = chtlab.check_dag_properties(broken, build.failure_pattern, build.history, build.times)
    tr = v.clause("3-transitive")
    assert tr.status == VIOLATED
    assert tr.counterexample["missing_edge"] == [chtlab.fmt_vertex(a), chtlab.fmt_vertex(c)]


def test_wrong_sample_value_is_caught():
    build = _build(2, 2)
    G = build.dags[1]
    v0 = min(G.vertices)
    fake = (v0[0], 99, v0[2])
    swap = lambda v: fake if v == v0 else v
    G2 = FdDag(frozenset(map(swap, G.vertices)), frozenset((swap(a), swap(b)) for a, b in G.edges))
    times = {swap(k): t for k, t in build.times.items()}
    v = chtlab.check_dag_properties(G2, build.failure_pattern, build.history, times)
    assert v.clause("1a-sampled-value").status == VIOLATED


def test_short_run_leaves_follower_property_open():
    build = _build(2, 3)
    G = build.dags[1]
    snaps = build.snapshots[1]
    v = chtlab.check_dag_properties(G, build.failure_pattern, build.history, build.times, snaps)
    prop4 = v.clause("4-eventual-follower")
    assert prop4.status == INCONCLUSIVE
    assert prop4.counterexample["snapshot_tick"] in {tick for (tick, _), _ in snaps}
    early = chtlab.check_dag_properties(G, build.failure_pattern, build.history, build.times, snaps,
                                        until=snaps[0][0][0])
    assert early.clause("4-eventual-follower").status == SATISFIED


def test_edge_list_format():
    G = _build(2, 1).dags[1]
    lines = G.edge_list().splitlines()
    assert all(len(line.split()) in (1, 2) for line in lines)
    assert len([line for line in lines if len(line.split()) == 2]) == len(G.edges)


# -- simulation tree -----------------------------------------------------------------


def _path_dag():
    u, w = (1, 1, 1), (2, 1, 1)
    times = {u: (1, 0), w: (2, 0)}
    return FdDag(frozenset({u, w}), frozenset({(u, w)})), times


def test_depth_zero_is_just_the_root():
    tree = chtlab.build_simulation_tree(_path_dag()[0], 2, 0)
    assert len(tree.nodes) == 1 and tree.pretty(0) == "(root)"


def test_tree_size_matches_naive_enumeration():
    G, _ = _path_dag()
    for depth in (1, 2, 3):
        tree = chtlab.build_simulation_tree(G, 2, depth)
        assert len(tree.nodes) == chtlab.count_schedules(G, 2, depth)
    tree = chtlab.build_simulation_tree(G, 2, 2)
    # depth 1: p1 or p2 starts and proposes 0 or 1; depth 2 only after p1's vertex
    assert sum(1 for n in tree.nodes if n.depth == 1) == 4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 2))
def test_tree_matches_naive_on_random_dags(seed, depth, max_instance):
    build = chtlab.random_dag_build(random.Random(seed), max_n=3, max_vertices=8)
    G = build.dags[min(build.failure_pattern.correct)]
    tree = chtlab.build_simulation_tree(G, build.scenario.n, depth, max_instance=max_instance,
                                        max_vertices=500_000)
    assert len(tree.nodes) == chtlab.count_schedules(G, build.scenario.n, depth, max_instance=max_instance)
    for k in (1, 2):
        assert chtlab.compute_k_tags(tree, k) == chtlab.naive_k_tags(tree, k)


def test_schedules_follow_dag_paths_and_sent_messages():
    build = _build(2, 3, "seeded")
    G = build.dags[1]
    tree = chtlab.build_simulation_tree(G, 2, 4)
    for i in range(1, len(tree.nodes), 37):
        path = tree.path(i)
        assert all((a, b) in G.edges for a, b in zip(path, path[1:]))
        node, parent = tree.nodes[i], tree.nodes[tree.nodes[i].parent]
        v, msg, _ = node.label
        if msg is not None:
            assert any(key[0] == v[0] and (key[1], key[2]) == msg for key, _ in parent.pending)


def test_budget_is_enforced():
    G = _build(3, 4).dags[1]
    with pytest.raises(BudgetExceeded, match="tree vertex budget of 100 exceeded"):
        chtlab.build_simulation_tree(G, 3, 5, max_vertices=100)
    with pytest.raises(ValueError):
        chtlab.build_simulation_tree(G, 3, 1, max_vertices=10**12)


# -- tags ---------------------------------------------------------------------------------


def test_tags_only_grow_with_depth():
    G = _build(2, 4).dags[1]
    small = chtlab.build_simulation_tree(G, 2, 3, max_instance=2)
    big = chtlab.build_simulation_tree(G, 2, 4, max_instance=2)
    for k in (1, 2):
        ts, tb = chtlab.compute_k_tags(small, k), chtlab.compute_k_tags(big, k)
        for i in range(len(small.nodes)):
            j = big.index_of(small.labels(i))
            assert ts[i] <= tb[j]


@pytest.fixture(scope="module")
def deep_tree():
    # six samples each give DAG paths long enough for two instances and split decisions
    G = _build(2, 6).dags[1]
    return chtlab.build_simulation_tree(G, 2, 6, max_instance=2)


def test_non_enabled_vertices_have_empty_tags(deep_tree):
    tree = deep_tree
    tags = chtlab.compute_k_tags(tree, 2)
    for node, tag in zip(tree.nodes, tags):
        if not any(inst == 1 for _, inst, _ in node.decisions):
            assert tag == frozenset()
    assert any(tags)


def test_single_value_forces_the_tag():
    G = _build(2, 3).dags[1]
    ones = chtlab.build_simulation_tree(G, 2, 4, input_policy=lambda p, k: (1,))
    tags = chtlab.compute_k_tags(ones, 1)
    assert tags[0] == {1}
    assert all(t <= {1} for t in tags)


def test_root_is_bivalent_when_inputs_branch():
    G = _build(2, 3).dags[1]
    tree = chtlab.build_simulation_tree(G, 2, 4)
    decided = {x for n in tree.nodes for _, inst, x in n.decisions if inst == 1}
    assert decided == {0, 1}
    assert chtlab.compute_k_tags(tree, 1)[0] == {0, 1}


def test_validity_forces_both_values_before_anyone_proposes():
    G = _build(2, 4, "constant").dags[1]
    tree = chtlab.build_simulation_tree(G, 2, 4)
    tags = chtlab.compute_k_tags(tree, 1)
    fresh = [i for i, n in enumerate(tree.nodes) if not n.started]
    assert fresh and all({0, 1} <= tags[i] for i in fresh)


def test_split_decisions_tag_bot(deep_tree):
    tags = chtlab.compute_k_tags(deep_tree, 1)
    assert any(BOT in t for t in tags)
    assert tags == chtlab.naive_k_tags(deep_tree, 1)
    assert chtlab.compute_k_tags(deep_tree, 2) == chtlab.naive_k_tags(deep_tree, 2)


# -- bivalent search --------------------------------------------------------------


def test_disagreeing_leaders_yield_bivalent_vertex():
    G = _build(2, 4).dags[1]
    tree = chtlab.build_simulation_tree(G, 2, 4)
    found = chtlab.locate_k_bivalent(tree, 1)
    assert found is not None and found[1] == 1
    tags = chtlab.compute_k_tags(tree, 1)
    assert chtlab.settled_bivalent(tree, tags, 1)
    bigger = chtlab.build_simulation_tree(G, 2, 5)
    j = bigger.index_of(tree.labels(found[0]))
    assert chtlab.is_bivalent(chtlab.compute_k_tags(bigger, 1)[j])


def test_constant_leader_has_no_settled_bivalence():
    G = _build(2, 4, "constant").dags[1]
    tree = chtlab.build_simulation_tree(G, 2, 5)
    tags = chtlab.compute_k_tags(tree, 1)
    assert chtlab.settled_bivalent(tree, tags, 1) == []


def test_max_k_zero_is_vacuous():
    tree = chtlab.build_simulation_tree(_build(2, 3).dags[1], 2, 3)
    assert chtlab.locate_k_bivalent(tree, 0) is None


def test_search_order_starts_from_smallest_m():
    tree = chtlab.build_simulation_tree(_build(2, 3).dags[1], 2, 3)
    i, k = chtlab.locate_k_bivalent(tree, 1)
    tags = chtlab.compute_k_tags(tree, 1)
    best = min(chtlab.vertex_order_key(tree, j) for j in range(len(tree.nodes)) if chtlab.is_bivalent(tags[j]))
    assert chtlab.vertex_order_key(tree, i) == best


def test_histogram_names():
    assert chtlab.tag_histogram([frozenset(), frozenset({0, 1}), frozenset({0, BOT}), frozenset({0, 1})]) == {
        "{0,1}": 2, "{0,bot}": 1, "{}": 1}
