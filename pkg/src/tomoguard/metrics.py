"""Topology comparison metrics: TED similarity, structural similarity, link distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import LeafSetMismatch
from .topology import TreeTopology, edge_leafsets, natural_key

INTERNAL_LABEL = -1


@dataclass(frozen=True)
class MetricReport:
    ted_similarity: float
    struct_similarity: float
    link_distance: float
    components: tuple  # (d_nodes, d_edges, d_degree, d_diameter)

    def as_dict(self) -> dict:
        names = ("nodes", "edges", "degree", "diameter")
        return {
            "ted": self.ted_similarity,
            "struct": self.struct_similarity,
            "link": self.link_distance,
            "components": dict(zip(names, self.components)),
        }


# -- tree edit distance -------------------------------------------------------

def _postorder_arrays(T: TreeTopology, codes: dict):
    """Labels, leftmost-leaf indices and keyroots for Zhang-Shasha."""
    order = T.postorder
    pos = {v: i for i, v in enumerate(order)}
    lml = np.empty(len(order), dtype=np.int64)
    for i, v in enumerate(order):
        kids = T.children(v)
        lml[i] = i if not kids else lml[pos[kids[0]]]
    labels = np.array([INTERNAL_LABEL if T.children(v) else codes[v] for v in order], dtype=np.int64)
    last = {}
    for i, m in enumerate(lml):
        last[int(m)] = i
    keyroots = np.array(sorted(last.values()), dtype=np.int64)
    return labels, lml, keyroots


def tree_edit_distance(T: TreeTopology, U: TreeTopology) -> int:
    """Unit-cost ordered edit distance between canonically ordered trees.

    Leaves carry their label; all internal nodes share one label, since
    internal names are arbitrary.
    """
    names = sorted(set(T.leaves) | set(U.leaves), key=natural_key)
    codes = {v: i for i, v in enumerate(names)}
    return kernels.zhang_shasha(*_postorder_arrays(T, codes), *_postorder_arrays(U, codes))


def ted_similarity(T: TreeTopology, T_hat: TreeTopology) -> float:
    d0 = tree_edit_distance(T, T_hat)
    return 1.0 - d0 / (len(T.nodes) + len(T_hat.nodes))


# -- structural statistics ----------------------------------------------------

def degrees(T: TreeTopology) -> dict:
    """Undirected degree of every node."""
    return {v: len(T.children(v)) + (v != T.root) for v in T.nodes}


def hop_diameter(T: TreeTopology) -> int:
    """Longest path (in links) between any two nodes."""
    best = 0
    height = {}
    for v in T.postorder:
        hs = sorted((height[c] + 1 for c in T.children(v)), reverse=True)
        height[v] = hs[0] if hs else 0
        best = max(best, sum(hs[:2]))
    return best


def _rel_diff(a: float, b: float) -> float:
    return abs(a - b) / max(a, b, 1)


def _degree_diff(T: TreeTopology, U: TreeTopology, all_nodes: bool) -> float:
    dT, dU = degrees(T), degrees(U)
    if not all_nodes:
        # destination nodes are matched by label
        a = np.array([dT[v] for v in T.leaves], dtype=float)
        b = np.array([dU.get(v, 0) for v in T.leaves], dtype=float)
    else:
        n = max(len(dT), len(dU))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(dT)] = sorted(dT.values(), reverse=True)
        b[: len(dU)] = sorted(dU.values(), reverse=True)
    return min(1.0, float(np.mean(np.abs(a - b))) / max(float(np.mean(a)), 1.0))


def struct_components(T: TreeTopology, T_hat: TreeTopology, all_nodes_degree: bool = False) -> tuple:
    return (
        _rel_diff(len(T.nodes), len(T_hat.nodes)),
        _rel_diff(len(T.links), len(T_hat.links)),
        _degree_diff(T, T_hat, all_nodes_degree),
        _rel_diff(hop_diameter(T), hop_diameter(T_hat)),
    )


def struct_similarity(T: TreeTopology, T_hat: TreeTopology, all_nodes_degree: bool = False):
    """Return ``(score, components)`` with score = 1 - mean of the four components."""
    comps = struct_components(T, T_hat, all_nodes_degree)
    return 1.0 - sum(comps) / 4.0, comps


# -- edge-set metrics -----------------------------------------------------------

def _check_leaves(T: TreeTopology, U: TreeTopology):
    if set(T.leaves) != set(U.leaves):
        raise LeafSetMismatch("trees must share the same leaf set")


def link_symmetric_difference(T: TreeTopology, T_hat: TreeTopology) -> int:
    _check_leaves(T, T_hat)
    return len(edge_leafsets(T) ^ edge_leafsets(T_hat))


def link_distance(T: TreeTopology, T_hat: TreeTopology) -> float:
    _check_leaves(T, T_hat)
    a, b = edge_leafsets(T), edge_leafsets(T_hat)
    return len(a ^ b) / len(a | b)


def compare(T: TreeTopology, T_hat: TreeTopology, all_nodes_degree: bool = False) -> MetricReport:
    score, comps = struct_similarity(T, T_hat, all_nodes_degree)
    return MetricReport(ted_similarity(T, T_hat), score, link_distance(T, T_hat), comps)
