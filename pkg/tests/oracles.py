"""Independent reference implementations used by the tests.

Nothing here calls the package's algorithms; only plain tree accessors
(parent map, children, delays) are used.
"""
from functools import lru_cache
from itertools import combinations
from math import comb, log, sqrt, pi

import numpy as np
from scipy.optimize import nnls


def root_path_links(T, v):
    """Links on the path root -> v, as (parent, child) pairs."""
    out = []
    while v != T.root:
        p = T.parent[v]
        out.append((p, v))
        v = p
    return set(out)


def brute_routing_rows(T, pairs, links):
    return [[1 if e in (root_path_links(T, i) & root_path_links(T, j)) else 0 for e in links]
            for i, j in pairs]


def walk_lca_depth(T, a, b):
    """Delay depth of the deepest common ancestor, by walking parent pointers."""
    anc_a = [a]
    while anc_a[-1] != T.root:
        anc_a.append(T.parent[anc_a[-1]])
    v = b
    while v not in anc_a:
        v = T.parent[v]
    depth = 0.0
    while v != T.root:
        depth += T.link_delay[(T.parent[v], v)]
        v = T.parent[v]
    return depth


@lru_cache(maxsize=None)
def count_rooted_trees(n):
    """Rooted leaf-labelled trees on n leaves with no unary internal node.

    ``P(n)`` counts labelled forests (set partitions weighted by tree counts);
    a tree on n >= 2 leaves is a partition into at least two blocks.
    """
    if n == 1:
        return 1
    return sum(comb(n - 1, j - 1) * count_rooted_trees(j) * _forests(n - j) for j in range(1, n))


@lru_cache(maxsize=None)
def _forests(n):
    if n == 0:
        return 1
    return sum(comb(n - 1, j - 1) * count_rooted_trees(j) * _forests(n - j) for j in range(1, n + 1))


def _ordered(T, v):
    """Nested (label, children) tuple; internal nodes carry label None."""
    kids = T.children(v)
    return (None if kids else v, tuple(_ordered(T, c) for c in kids))


def _forest_size(f):
    return sum(1 + _forest_size(t[1]) for t in f)


@lru_cache(maxsize=None)
def _forest_dist(f, g):
    if not f and not g:
        return 0
    if not f:
        return _forest_size(g)
    if not g:
        return _forest_size(f)
    (lf, cf), (lg, cg) = f[-1], g[-1]
    return min(
        _forest_dist(f[:-1] + cf, g) + 1,
        _forest_dist(f, g[:-1] + cg) + 1,
        _forest_dist(cf, cg) + _forest_dist(f[:-1], g[:-1]) + (0 if lf == lg else 1),
    )


def brute_tree_edit_distance(T, U):
    """Classic recursive ordered forest edit distance, unit costs."""
    return _forest_dist((_ordered(T, T.root),), (_ordered(U, U.root),))


def relu_gauss_mean(eps):
    return eps / sqrt(2 * pi)


def three_point_ok(S, rtol=1e-9):
    n = len(S)
    for i, j, k in combinations(range(n), 3):
        a = sorted([S[i][j], S[i][k], S[j][k]])
        if abs(a[0] - a[1]) > rtol * max(1.0, abs(a[1])):
            return False
    return True


def entropy_bits(p):
    return -sum(x * log(x, 2) for x in p if x > 0)


def leaf_clusters(T):
    """Leaf set below every non-root node, by walking up from each leaf."""
    below = {}
    for leaf in T.leaves:
        v = leaf
        while v != T.root:
            below.setdefault(v, set()).add(leaf)
            v = T.parent[v]
    return {frozenset(s) for s in below.values()}


def cluster_distance(T, U):
    return len(leaf_clusters(T) ^ leaf_clusters(U))


def shared_design(T, pairs):
    """Columns of the routing matrix for links with two or more leaves below."""
    links = [(T.parent[v], v) for v in sorted(T.nodes - {T.root}) if len(_below(T, v)) >= 2]
    return brute_routing_rows(T, pairs, links)


def _below(T, v):
    return {leaf for leaf in T.leaves if v in _ancestors_inclusive(T, leaf)}


def _ancestors_inclusive(T, v):
    out = [v]
    while v != T.root:
        v = T.parent[v]
        out.append(v)
    return out


def nnls_residual(T, x):
    """Squared residual of the nonnegative least-squares fit, via scipy."""
    A = np.array(shared_design(T, x.pair_index), dtype=float).reshape(len(x.pair_index), -1)
    if A.shape[1] == 0:
        return float(x.values @ x.values)
    _, rnorm = nnls(A, x.values)
    return rnorm ** 2


def gibbs_expectation(losses, dists, beta):
    w = np.exp(-beta * (np.asarray(losses) - min(losses)))
    w /= w.sum()
    return float(w @ np.asarray(dists))
