import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_routing_rows, count_rooted_trees, walk_lca_depth
from tomoguard.errors import (CycleDetected, DimensionMismatch, DisconnectedNode, DuplicateEdge,
                              InvariantViolation, NonPositiveDelay, SpaceTooLarge)
from tomoguard.topology import (LinkDelays, build_tree, canonical_form, contract, default_leaf_labels,
                                edge_leafsets, enumerate_topologies, format_topology, link_delays,
                                local_edit_neighborhood, parse_topology, random_tree, read_topology,
                                regraft, routing_matrix, shared_path_vector, single_edit_neighbours,
                                split, true_vector, write_topology)

EXAMPLE = [("s", "u", 2), ("u", "v1", 1), ("u", "v2", 1), ("s", "v3", 3)]

trees = st.builds(random_tree, st.integers(2, 8), st.integers(0, 2 ** 32 - 1), st.integers(2, 4))


def star(labels, delay=1.0):
    return build_tree([("s", v, delay) for v in labels], "s")


def caterpillar4():
    return build_tree([("s", "a", 1), ("a", "b", 2), ("b", "v1", 1), ("b", "v2", 1),
                       ("a", "v3", 1), ("s", "v4", 1)], "s")


def test_build_example_tree():
    T = build_tree(EXAMPLE, "s")
    assert T.leaves == ("v1", "v2", "v3")
    assert T.depth["v1"] == 3
    assert T.depth["u"] == 2


def test_single_leaf_rejected():
    with pytest.raises(InvariantViolation):
        build_tree([("s", "a", 1)], "s")


def test_cycle_rejected():
    with pytest.raises(CycleDetected):
        build_tree(EXAMPLE + [("u", "s", 1)], "s")


@pytest.mark.parametrize("edges,err", [
    ([("s", "a", 1), ("s", "b", 0)], NonPositiveDelay),
    ([("s", "a", 1), ("s", "b", -2)], NonPositiveDelay),
    ([("s", "a", 1), ("s", "b", 1), ("s", "b", 1)], DuplicateEdge),
    ([("s", "a", 1), ("s", "b", 1), ("x", "c", 1)], DisconnectedNode),
])
def test_build_errors(edges, err):
    with pytest.raises(err):
        build_tree(edges, "s")


def test_routing_example():
    T = build_tree(EXAMPLE, "s")
    A = routing_matrix(T)
    assert A.link_index == (("s", "u"), ("u", "v1"), ("u", "v2"), ("s", "v3"))
    assert A.pair_index == (("v1", "v2"), ("v1", "v3"), ("v2", "v3"))
    assert A.entries.tolist() == [[1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]


def test_routing_star_is_zero():
    assert not routing_matrix(star(["a", "b", "c", "d"])).entries.any()


def test_routing_caterpillar_matches_oracle():
    T = caterpillar4()
    A = routing_matrix(T)
    assert A.entries.tolist() == brute_routing_rows(T, A.pair_index, A.link_index)
    assert A.k == 6 and A.m == len(T.nodes) - 1


def test_shared_path_example_and_linearity():
    T = build_tree(EXAMPLE, "s")
    x = true_vector(T)
    assert x.values.tolist() == [2, 0, 0]
    assert not true_vector(star(["a", "b", "c"], 7.0)).values.any()
    A, mu = routing_matrix(T), link_delays(T)
    scaled = shared_path_vector(A, LinkDelays(mu.values * 3.5, mu.link_index))
    np.testing.assert_allclose(scaled.values, 3.5 * x.values)


def test_shared_path_dimension_mismatch():
    T = build_tree(EXAMPLE, "s")
    other = routing_matrix(star(["a", "b", "c"]))
    with pytest.raises(DimensionMismatch):
        shared_path_vector(other, link_delays(T))


@given(trees)
def test_routing_rows_give_lca_depth(T):
    A = routing_matrix(T)
    assert A.entries.tolist() == brute_routing_rows(T, A.pair_index, A.link_index)
    x = true_vector(T)
    for (a, b), v in zip(x.pair_index, x.values):
        assert v == pytest.approx(walk_lca_depth(T, a, b), rel=1e-12)


def test_canonical_order_independence():
    perm = [EXAMPLE[i] for i in (3, 1, 0, 2)]
    assert canonical_form(build_tree(EXAMPLE, "s")) == canonical_form(build_tree(perm, "s"))
    cherry = build_tree([("s", "u", 1), ("u", "v1", 1), ("u", "v2", 1), ("s", "v3", 1)], "s")
    assert canonical_form(star(["v1", "v2", "v3"])) != canonical_form(cherry)


@given(trees, st.randoms(use_true_random=False))
def test_canonical_invariant_under_edge_permutation(T, rnd):
    edges = [(p, c, T.link_delay[(p, c)]) for p, c in T.links]
    rnd.shuffle(edges)
    assert canonical_form(build_tree(edges, T.root)) == T.canonical


@given(trees)
def test_canonical_ignores_internal_names_and_delays(T):
    rename = {v: f"n{i}" for i, v in enumerate(T.internal_nodes)}
    edges = [(rename.get(p, p), rename.get(c, c), 1.0 + i) for i, (p, c) in enumerate(T.links)]
    assert canonical_form(build_tree(edges, rename[T.root])) == T.canonical


@pytest.mark.parametrize("l", range(2, 7))
def test_enumeration_matches_counting_oracle(l):
    space = enumerate_topologies(default_leaf_labels(l))
    assert len(space) == count_rooted_trees(l)
    assert len(set(space.canonical_forms)) == len(space)


def test_enumeration_small_sizes():
    assert len(enumerate_topologies(["a", "b"])) == 1
    assert len(enumerate_topologies(["a", "b", "c"])) == 4
    assert len(enumerate_topologies(["a", "b", "c", "d"])) == 26
    assert count_rooted_trees(4) == 26


def test_enumeration_guard():
    with pytest.raises(SpaceTooLarge):
        enumerate_topologies(default_leaf_labels(9))


def test_enumeration_has_no_unary_nodes():
    for T in enumerate_topologies(default_leaf_labels(5)):
        assert all(len(T.children(v)) >= 2 for v in T.internal_nodes)


def test_random_tree_determinism_and_range():
    assert random_tree(6, 11) == random_tree(6, 11)
    assert random_tree(6, 11).link_delay == random_tree(6, 11).link_delay
    for s in range(1000):
        d = np.array(list(random_tree(5, s).link_delay.values()))
        assert d.min() >= 100 and d.max() <= 500


@pytest.mark.parametrize("seed", range(20))
def test_random_tree_binary_when_fanout_two(seed):
    T = random_tree(5, seed, max_fanout=2)
    assert all(len(T.children(v)) == 2 for v in T.internal_nodes)


@given(trees)
def test_random_tree_respects_fanout_and_leaves(T):
    assert all(2 <= len(T.children(v)) for v in T.internal_nodes)
    assert set(T.leaves) == {v for v in T.nodes if not T.children(v)}


def test_edge_leafsets_examples():
    T = build_tree(EXAMPLE, "s")
    fs = frozenset
    assert edge_leafsets(T) == {fs({"v1", "v2"}), fs({"v1"}), fs({"v2"}), fs({"v3"})}
    assert edge_leafsets(star(["a", "b", "c"])) == {fs({"a"}), fs({"b"}), fs({"c"})}
    assert edge_leafsets(T) == edge_leafsets(build_tree(list(reversed(EXAMPLE)), "s"))


def test_topology_file_round_trip(tmp_path):
    T = random_tree(6, 5)
    path = tmp_path / "t.txt"
    write_topology(T, path)
    U = read_topology(path)
    assert U.canonical == T.canonical
    assert U.link_delay == T.link_delay


def test_topology_file_comments_and_whitespace():
    text = "# a comment\nroot s\ns  u 2  # trailing\n\nu v1 1\nu\tv2 1\ns v3 3\n"
    T = parse_topology(text)
    assert T == build_tree(EXAMPLE, "s")
    assert format_topology(T).splitlines()[0] == "root s"


@given(trees)
def test_local_edits_stay_valid(T):
    for U in single_edit_neighbours(T):
        assert U.leaves == T.leaves
        assert all(len(U.children(v)) >= 2 for v in U.internal_nodes)
        assert U.canonical != T.canonical


def test_contract_split_inverse():
    T = build_tree(EXAMPLE, "s")
    S = contract(T, "u")
    assert S.canonical == star(["v1", "v2", "v3"]).canonical
    back = split(S, "s", ["v1", "v2"])
    assert back.canonical == T.canonical


def test_regraft_moves_subtree():
    # moving v3 under u leaves the root unary, which is then suppressed
    T = build_tree(EXAMPLE, "s")
    assert regraft(T, "v3", "u").canonical == star(["v1", "v2", "v3"]).canonical
    T = build_tree([("s", "u", 1), ("u", "v1", 1), ("u", "v2", 1), ("s", "w", 1), ("w", "v3", 1),
                    ("w", "v4", 1)], "s")
    assert regraft(T, "v2", "w").canonical == "(v1,(v2,v3,v4))"


def test_local_neighbourhood_contains_truth():
    T = random_tree(8, 3)
    space = local_edit_neighborhood(T, 50, 0)
    assert T in space and len(space) <= 50
    assert len(set(space.canonical_forms)) == len(space)


def test_prime_delays_give_distinct_vectors():
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37]
    space = enumerate_topologies(default_leaf_labels(4))
    seen = {}
    for T in space:
        U = T.with_delays({e: float(primes[i]) for i, e in enumerate(T.links)})
        seen.setdefault(tuple(true_vector(U).values), []).append(T.canonical)
    assert len(seen) == 26
    assert all(len(v) == 1 for v in seen.values())


def test_pairs_are_sorted_combinations():
    T = random_tree(5, 1)
    assert T.pairs == tuple(itertools.combinations(T.leaves, 2))
