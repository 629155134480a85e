import itertools

import pytest
from hypothesis import given, strategies as st

from oracles import brute_tree_edit_distance
from tomoguard.errors import LeafSetMismatch
from tomoguard.metrics import (compare, degrees, hop_diameter, link_distance, link_symmetric_difference,
                               struct_similarity, ted_similarity, tree_edit_distance)
from tomoguard.topology import build_tree, default_leaf_labels, enumerate_topologies, random_tree

STAR = build_tree([("s", "a", 1), ("s", "b", 1), ("s", "c", 1)], "s")
CHERRY = build_tree([("s", "u", 1), ("u", "a", 1), ("u", "b", 1), ("s", "c", 1)], "s")


def small_trees():
    out = []
    for l in range(2, 6):
        out += [t for t in enumerate_topologies(default_leaf_labels(l)) if len(t.nodes) <= 6]
    return out


def test_ted_matches_brute_force_on_all_small_pairs():
    trees = small_trees()
    assert len(trees) == 17
    for T, U in itertools.product(trees, repeat=2):
        assert tree_edit_distance(T, U) == brute_tree_edit_distance(T, U)


@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_ted_matches_brute_force_random(l1, l2, seed):
    T, U = random_tree(l1, seed), random_tree(l2, seed ^ 0x5A5A)
    assert tree_edit_distance(T, U) == brute_tree_edit_distance(T, U)


def test_star_vs_cherry():
    assert link_distance(STAR, CHERRY) == 0.25
    assert link_symmetric_difference(STAR, CHERRY) == 1
    # one internal node inserted: TED 1 over 4 + 5 nodes
    assert ted_similarity(STAR, CHERRY) == pytest.approx(1 - 1 / 9)


@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_identity_cases_exact(l, seed):
    T = random_tree(l, seed)
    r = compare(T, T)
    assert (r.ted_similarity, r.struct_similarity, r.link_distance) == (1.0, 1.0, 0.0)
    assert r.components == (0.0, 0.0, 0.0, 0.0)
    assert compare(T, T, all_nodes_degree=True).struct_similarity == 1.0


@given(st.integers(3, 7), st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 32 - 1))
def test_metric_ranges_and_symmetry(l, s1, s2):
    T, U = random_tree(l, s1), random_tree(l, s2)
    r = compare(T, U)
    assert 0 <= r.link_distance <= 1 and 0 <= r.ted_similarity <= 1 and 0 <= r.struct_similarity <= 1
    assert link_distance(T, U) == link_distance(U, T)
    assert tree_edit_distance(T, U) == tree_edit_distance(U, T)


def test_leaf_degree_component_is_degenerate():
    _, comps = struct_similarity(STAR, CHERRY)
    assert comps[2] == 0.0
    _, comps = struct_similarity(STAR, CHERRY, all_nodes_degree=True)
    assert comps[2] > 0


def test_structural_helpers():
    assert hop_diameter(STAR) == 2 and hop_diameter(CHERRY) == 3
    assert degrees(CHERRY) == {"s": 2, "u": 3, "a": 1, "b": 1, "c": 1}
    score, comps = struct_similarity(STAR, CHERRY)
    # nodes 4 vs 5, links 3 vs 4, diameter 2 vs 3
    assert comps == pytest.approx((1 / 5, 1 / 4, 0.0, 1 / 3))
    assert score == pytest.approx(1 - (1 / 5 + 1 / 4 + 1 / 3) / 4)
    assert compare(STAR, CHERRY).as_dict()["components"]["diameter"] == pytest.approx(1 / 3)


def test_leaf_mismatch():
    other = build_tree([("s", "x", 1), ("s", "y", 1)], "s")
    with pytest.raises(LeafSetMismatch):
        link_distance(STAR, other)
