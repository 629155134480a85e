"""Rooted routing trees, shared-path algebra and topology spaces.

A :class:`TreeTopology` is an immutable rooted tree whose leaves are the
receivers. Leaf labels carry identity across trees; internal node names are
arbitrary and never compared. The delay-weighted depth ``h(v)`` (sum of link
delays from the root) is the only notion of depth used for shared paths.
"""
from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DimensionMismatch,
    DisconnectedNode,
    DuplicateEdge,
    InvariantViolation,
    NegativeEntry,
    NonFiniteValue,
    NonPositiveDelay,
    SpaceTooLarge,
)

MAX_ENUMERABLE_LEAVES = 8
DEFAULT_DELAY_RANGE_MS = (100.0, 500.0)

_BAD_LABEL = re.compile(r"[\s#(),]")
_DIGITS = re.compile(r"(\d+)")


def natural_key(label: str):
    """Sort key that orders ``v2`` before ``v10``."""
    parts = _DIGITS.split(label)
    return tuple(int(p) if i % 2 else p for i, p in enumerate(parts))


def _check_label(label: str) -> str:
    if not label or _BAD_LABEL.search(label):
        raise InvariantViolation(f"invalid node id {label!r}")
    return label


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class TreeTopology:
    """Validated rooted tree with positive link delays (milliseconds).

    Build instances with :func:`build_tree`, :func:`parse_topology` or the
    generators in this module rather than calling the constructor directly.
    """

    def __init__(self, root: str, parent: Mapping[str, str],
                 link_delay: Mapping[tuple[str, str], float]):
        self.root = root
        self.parent = MappingProxyType(dict(parent))
        self.link_delay = MappingProxyType(dict(link_delay))

    # -- structure -------------------------------------------------------
    @cached_property
    def nodes(self) -> frozenset:
        return frozenset(self.parent) | {self.root}

    @cached_property
    def _raw_children(self) -> dict:
        kids: dict[str, list[str]] = {v: [] for v in self.nodes}
        for c, p in self.parent.items():
            kids[p].append(c)
        return kids

    @cached_property
    def leaves(self) -> tuple:
        return tuple(sorted((v for v, k in self._raw_children.items() if not k), key=natural_key))

    @cached_property
    def _leafsets(self) -> dict:
        out: dict[str, frozenset] = {}
        for v in self._postorder_raw:
            kids = self._raw_children[v]
            out[v] = frozenset([v]) if not kids else frozenset().union(*(out[c] for c in kids))
        return out

    @cached_property
    def _postorder_raw(self) -> list:
        order, stack = [], [(self.root, False)]
        while stack:
            v, done = stack.pop()
            if done:
                order.append(v)
                continue
            stack.append((v, True))
            stack.extend((c, False) for c in self._raw_children[v])
        return order

    @cached_property
    def _children(self) -> dict:
        return {
            v: tuple(sorted(kids, key=lambda c: _leafset_key(self._leafsets[c])))
            for v, kids in self._raw_children.items()
        }

    def children(self, v: str) -> tuple:
        """Children of ``v`` in canonical order (by the leaf labels beneath)."""
        return self._children[v]

    def is_leaf(self, v: str) -> bool:
        return not self._children[v]

    def leafset(self, v: str) -> frozenset:
        return self._leafsets[v]

    @cached_property
    def preorder(self) -> tuple:
        order, stack = [], [self.root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(self._children[v]))
        return tuple(order)

    @cached_property
    def postorder(self) -> tuple:
        order = []

        def visit(v):
            for c in self._children[v]:
                visit(c)
            order.append(v)

        visit(self.root)
        return tuple(order)

    @cached_property
    def internal_nodes(self) -> tuple:
        return tuple(v for v in self.preorder if self._children[v])

    @cached_property
    def links(self) -> tuple:
        """Links ``(parent, child)`` in canonical preorder."""
        return tuple((self.parent[v], v) for v in self.preorder if v != self.root)

    @cached_property
    def pairs(self) -> tuple:
        return tuple(itertools.combinations(self.leaves, 2))

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)

    @cached_property
    def depth(self) -> Mapping[str, float]:
        """Delay-weighted depth of every node."""
        h = {self.root: 0.0}
        for v in self.preorder[1:]:
            p = self.parent[v]
            h[v] = h[p] + self.link_delay[(p, v)]
        return MappingProxyType(h)

    @cached_property
    def hops(self) -> Mapping[str, int]:
        h = {self.root: 0}
        for v in self.preorder[1:]:
            h[v] = h[self.parent[v]] + 1
        return MappingProxyType(h)

    def ancestors(self, v: str) -> list:
        out = [v]
        while v != self.root:
            v = self.parent[v]
            out.append(v)
        return out

    def lca(self, a: str, b: str) -> str:
        anc = set(self.ancestors(a))
        for v in self.ancestors(b):
            if v in anc:
                return v
        raise InvariantViolation("nodes share no ancestor")  # unreachable for valid trees

    def edges(self) -> list:
        return [(p, c, self.link_delay[(p, c)]) for p, c in self.links]

    @cached_property
    def canonical(self) -> str:
        return canonical_form(self)

    @cached_property
    def informative_design(self) -> np.ndarray:
        """Routing-matrix columns of links shared by at least one leaf pair.

        Pendant links never lie on a shared path, so their all-zero columns
        are dropped; fits against this matrix are equivalent to fits against
        the full routing matrix.
        """
        full = routing_matrix(self).entries.astype(np.float64)
        keep = [e for e, (_, c) in enumerate(self.links) if len(self._leafsets[c]) >= 2]
        return np.ascontiguousarray(full[:, keep])

    # -- derived trees ---------------------------------------------------
    def scaled(self, factor: float) -> "TreeTopology":
        """Copy with every link delay multiplied by ``factor``."""
        if not factor > 0:
            raise NonPositiveDelay("scale factor must be positive")
        return TreeTopology(self.root, self.parent,
                            {e: d * factor for e, d in self.link_delay.items()})

    def with_delays(self, delays: Mapping[tuple[str, str], float]) -> "TreeTopology":
        new = dict(self.link_delay)
        for e, d in delays.items():
            if e not in new:
                raise InvariantViolation(f"unknown link {e}")
            if not (math.isfinite(d) and d > 0):
                raise NonPositiveDelay(f"link {e} delay {d}")
            new[e] = float(d)
        return TreeTopology(self.root, self.parent, new)

    def __eq__(self, other):
        if not isinstance(other, TreeTopology):
            return NotImplemented
        return (self.root == other.root and dict(self.parent) == dict(other.parent)
                and dict(self.link_delay) == dict(other.link_delay))

    def __hash__(self):
        return hash((self.root, self.canonical))

    def __repr__(self):
        return f"TreeTopology({self.canonical}, root={self.root!r}, nodes={len(self.nodes)})"


def _leafset_key(leafset: Iterable[str]):
    return tuple(sorted(natural_key(x) for x in leafset))


def build_tree(edges: Iterable[tuple], root) -> TreeTopology:
    """Validate an edge list ``[(parent, child, delay_ms), ...]`` into a tree."""
    edges = list(edges)
    if not edges:
        raise InvariantViolation("edge list is empty")
    parent: dict[str, str] = {}
    delay: dict[tuple[str, str], float] = {}
    for edge in edges:
        if len(edge) != 3:
            raise InvariantViolation(f"malformed edge {edge!r}")
        p, c, d = _check_label(str(edge[0])), _check_label(str(edge[1])), float(edge[2])
        if not (math.isfinite(d) and d > 0):
            raise NonPositiveDelay(f"link ({p}, {c}) has delay {d}")
        if p == c:
            raise CycleDetected(f"self loop on {p}")
        if (p, c) in delay:
            raise DuplicateEdge(f"link ({p}, {c}) listed twice")
        if c in parent:
            raise DuplicateEdge(f"node {c} has two parents ({parent[c]}, {p})")
        parent[c] = p
        delay[(p, c)] = d
    root = _check_label(str(root))
    if root in parent:
        raise CycleDetected(f"link ({parent[root]}, {root}) enters the root")
    nodes = set(parent) | set(parent.values())
    if root not in nodes:
        raise DisconnectedNode(f"root {root} does not appear in the edge list")
    reached = {root}
    for v in nodes:
        path, u = [], v
        while u not in reached:
            if u in path:
                raise CycleDetected(f"cycle through {u}")
            path.append(u)
            if u not in parent:
                raise DisconnectedNode(f"node {u} is not connected to root {root}")
            u = parent[u]
        reached.update(path)
    tree = TreeTopology(root, parent, delay)
    if len(tree.leaves) < 2:
        raise InvariantViolation(f"a tree needs at least 2 leaves, got {len(tree.leaves)}")
    return tree


# -- routing algebra ------------------------------------------------------

class Role(enum.Enum):
    TRUE = "true"
    PERTURBED = "perturbed"
    OBSERVED = "observed"


@dataclass(frozen=True)
class RoutingMatrix:
    entries: np.ndarray
    pair_index: tuple
    link_index: tuple

    @property
    def k(self) -> int:
        return len(self.pair_index)

    @property
    def m(self) -> int:
        return len(self.link_index)


@dataclass(frozen=True)
class LinkDelays:
    values: np.ndarray
    link_index: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (len(self.link_index),):
            raise DimensionMismatch("link delay vector length does not match link index")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise NonPositiveDelay("link delays must be strictly positive")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class PathDelayVector:
    values: np.ndarray
    role: Role
    pair_index: tuple

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (len(self.pair_index),):
            raise DimensionMismatch(f"{v.shape[0] if v.ndim else 0} values for {len(self.pair_index)} pairs")
        if np.any(~np.isfinite(v)):
            raise NonFiniteValue("path delays must be finite")
        if np.any(v < 0):
            raise NegativeEntry("path delays must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def leaves(self) -> tuple:
        return leaves_of_pairs(self.pair_index)

    def as_matrix(self) -> np.ndarray:
        """Symmetric ``l x l`` matrix with a zero diagonal."""
        leaves = self.leaves
        pos = {v: i for i, v in enumerate(leaves)}
        out = np.zeros((len(leaves), len(leaves)))
        for (a, b), x in zip(self.pair_index, self.values):
            out[pos[a], pos[b]] = out[pos[b], pos[a]] = x
        return out

    def with_values(self, values, role: Role | None = None) -> "PathDelayVector":
        return PathDelayVector(values, role or self.role, self.pair_index)


def leaves_of_pairs(pairs: Sequence[tuple]) -> tuple:
    """Recover the ordered leaf list from a ``combinations(leaves, 2)`` index."""
    if not pairs:
        return ()
    first = pairs[0][0]
    rest = [b for a, b in pairs if a == first]
    return (first, *rest)


def pair_index_for(leaves: Sequence[str]) -> tuple:
    return tuple(itertools.combinations(leaves, 2))


def routing_matrix(T: TreeTopology) -> RoutingMatrix:
    pairs, links = T.pairs, T.links
    entries = np.zeros((len(pairs), len(links)), dtype=np.uint8)
    for e, (_, c) in enumerate(links):
        below = T.leafset(c)
        if len(below) < 2:
            continue
        for r, (a, b) in enumerate(pairs):
            if a in below and b in below:
                entries[r, e] = 1
    return RoutingMatrix(entries, pairs, links)


def link_delays(T: TreeTopology) -> LinkDelays:
    return LinkDelays(np.array([T.link_delay[e] for e in T.links]), T.links)


def shared_path_vector(A: RoutingMatrix, mu: LinkDelays) -> PathDelayVector:
    """``X = A mu``: delay of the shared root path for every leaf pair."""
    if tuple(mu.link_index) != tuple(A.link_index):
        raise DimensionMismatch("link delays are not indexed like the routing matrix")
    return PathDelayVector(A.entries.astype(np.float64) @ mu.values, Role.TRUE, A.pair_index)


def true_vector(T: TreeTopology) -> PathDelayVector:
    return shared_path_vector(routing_matrix(T), link_delays(T))


# -- canonical structure --------------------------------------------------

def canonical_form(T: TreeTopology) -> str:
    """Delay-free encoding; equal strings iff equal leaf-labelled shapes."""

    def enc(v):
        kids = T.children(v)
        if not kids:
            return v
        return "(" + ",".join(enc(c) for c in kids) + ")"

    return enc(T.root)


def to_struct(T: TreeTopology):
    """Nested-tuple shape: a leaf label, or a tuple of child shapes."""

    def rec(v):
        kids = T.children(v)
        return v if not kids else tuple(rec(c) for c in kids)

    return rec(T.root)


def _struct_leaves(s) -> list:
    if isinstance(s, str):
        return [s]
    return [x for c in s for x in _struct_leaves(c)]


def _struct_string(s) -> str:
    if isinstance(s, str):
        return s
    return "(" + ",".join(_struct_string(c) for c in s) + ")"


def _struct_internal_count(s) -> int:
    if isinstance(s, str):
        return 0
    return 1 + sum(_struct_internal_count(c) for c in s)


def _canon_struct(s):
    if isinstance(s, str):
        return s
    kids = [_canon_struct(c) for c in s]
    kids.sort(key=lambda c: _leafset_key(_struct_leaves(c)))
    return tuple(kids)


def _fresh_namer(taken: Iterable[str], prefix: str = "u"):
    taken = set(taken)
    while any(t.startswith(prefix) for t in taken):
        prefix = "_" + prefix
    counter = itertools.count(1)
    return lambda: f"{prefix}{next(counter)}"


def tree_from_struct(struct, delays: Sequence[float] | float = 1.0, root: str | None = None) -> TreeTopology:
    """Build a tree from a nested-tuple shape.

    Internal nodes are named in preorder; ``delays`` is either one value for
    every link or one value per link in canonical preorder.
    """
    struct = _canon_struct(struct)
    if isinstance(struct, str):
        raise InvariantViolation("a single leaf is not a tree")
    leaves = _struct_leaves(struct)
    fresh = _fresh_namer(leaves)
    root = root or ("s" if "s" not in leaves else fresh())
    edges = []

    def rec(s, name):
        for c in s:
            cname = c if isinstance(c, str) else fresh()
            edges.append([name, cname])
            if not isinstance(c, str):
                rec(c, cname)

    rec(struct, root)
    if np.ndim(delays) == 0:
        vals = [float(delays)] * len(edges)
    else:
        vals = [float(d) for d in delays]
        if len(vals) != len(edges):
            raise DimensionMismatch(f"{len(vals)} delays for {len(edges)} links")
    return build_tree([(p, c, d) for (p, c), d in zip(edges, vals)], root)


def edge_leafsets(T: TreeTopology) -> frozenset:
    """One leaf cluster per link: the leaves below the link's child end."""
    return frozenset(T.leafset(c) for _, c in T.links)


# -- enumeration and generation ---------------------------------------------

def _set_partitions(items: tuple):
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [(first,) + part[i]] + part[i + 1:]
        yield [(first,)] + part


def _all_structs(items: tuple, memo: dict) -> list:
    if items in memo:
        return memo[items]
    if len(items) == 1:
        out = [items[0]]
    else:
        out = []
        for part in _set_partitions(items):
            if len(part) < 2:
                continue
            part = sorted(part, key=lambda b: natural_key(b[0]))
            for combo in itertools.product(*(_all_structs(b, memo) for b in part)):
                out.append(tuple(combo))
    memo[items] = out
    return out


class TopologySpace(Sequence):
    """Ordered set of distinct leaf-labelled shapes over a common leaf set.

    Members are materialised lazily as unit-delay :class:`TreeTopology`
    objects; only the nested shapes are held for large spaces.
    """

    def __init__(self, leaf_set: Sequence[str], structs: Sequence):
        self.leaf_set = tuple(sorted(leaf_set, key=natural_key))
        canon = [(_struct_string(s), s) for s in (_canon_struct(s) for s in structs)]
        canon.sort(key=lambda t: t[0])
        self._strings = [c for c, _ in canon]
        self._structs = [s for _, s in canon]
        if len(set(self._strings)) != len(self._strings):
            raise InvariantViolation("topology space contains duplicate shapes")
        self._index = {c: i for i, c in enumerate(self._strings)}
        self._cache: dict[int, TreeTopology] = {}

    @classmethod
    def from_trees(cls, trees: Iterable[TreeTopology]) -> "TopologySpace":
        trees = list(trees)
        if not trees:
            return cls((), [])
        seen, structs = set(), []
        leaf_set = trees[0].leaves
        for t in trees:
            if t.leaves != leaf_set:
                raise InvariantViolation("all members must share the leaf set")
            if t.canonical not in seen:
                seen.add(t.canonical)
                structs.append(to_struct(t))
        return cls(leaf_set, structs)

    def __len__(self):
        return len(self._structs)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if i not in self._cache:
            self._cache[i] = tree_from_struct(self._structs[i])
        return self._cache[i]

    def __iter__(self) -> Iterator[TreeTopology]:
        for i in range(len(self)):
            yield self[i]

    @property
    def members(self) -> list:
        return list(self)

    @property
    def canonical_forms(self) -> list:
        return list(self._strings)

    def index_of(self, T: TreeTopology | str) -> int:
        key = T if isinstance(T, str) else T.canonical
        return self._index[key]

    def __contains__(self, T) -> bool:
        key = T if isinstance(T, str) else getattr(T, "canonical", None)
        return key in self._index

    @cached_property
    def designs(self) -> np.ndarray:
        """Informative design matrices stacked as ``(n, k, m_max)``, zero padded."""
        mats = [t.informative_design for t in self]
        k = len(pair_index_for(self.leaf_set))
        m_max = max((a.shape[1] for a in mats), default=0)
        out = np.zeros((len(mats), k, max(m_max, 1)))
        for i, a in enumerate(mats):
            out[i, :, : a.shape[1]] = a
        return out


def enumerate_topologies(leaf_set: Sequence[str], max_internal: int | None = None) -> TopologySpace:
    """All rooted leaf-labelled trees without unary internal nodes."""
    leaves = tuple(sorted((str(x) for x in leaf_set), key=natural_key))
    if len(leaves) < 2:
        raise InvariantViolation("a topology space needs at least 2 leaves")
    if len(set(leaves)) != len(leaves):
        raise InvariantViolation("duplicate leaf labels")
    if len(leaves) > MAX_ENUMERABLE_LEAVES:
        raise SpaceTooLarge(f"{len(leaves)} leaves exceeds the enumeration guard of {MAX_ENUMERABLE_LEAVES}")
    for x in leaves:
        _check_label(x)
    structs = _all_structs(leaves, {})
    if max_internal is not None:
        structs = [s for s in structs if _struct_internal_count(s) <= max_internal]
    return TopologySpace(leaves, structs)


def default_leaf_labels(leaf_count: int) -> list:
    return [f"v{i + 1}" for i in range(leaf_count)]


def random_tree(leaf_count: int, rng_seed=None, max_fanout: int = 3,
                leaf_labels: Sequence[str] | None = None,
                delay_range: tuple[float, float] = DEFAULT_DELAY_RANGE_MS) -> TreeTopology:
    """Random multifurcating tree by repeated random merging of clusters.

    Link delays are i.i.d. uniform on ``delay_range``.
    """
    if leaf_count < 2:
        raise InvariantViolation("random_tree needs at least 2 leaves")
    if max_fanout < 2:
        raise InvariantViolation("max_fanout must be at least 2")
    lo, hi = delay_range
    if not 0 < lo <= hi:
        raise NonPositiveDelay(f"bad delay range {delay_range}")
    labels = list(leaf_labels) if leaf_labels is not None else default_leaf_labels(leaf_count)
    if len(labels) != leaf_count:
        raise InvariantViolation("leaf_labels length does not match leaf_count")
    rng = as_rng(rng_seed)
    clusters: list = list(labels)
    while len(clusters) > 1:
        g = int(rng.integers(2, min(max_fanout, len(clusters)) + 1))
        picked = sorted(rng.choice(len(clusters), size=g, replace=False).tolist())
        merged = tuple(clusters[i] for i in picked)
        clusters = [c for i, c in enumerate(clusters) if i not in picked] + [merged]
    struct = _canon_struct(clusters[0])
    n_links = len(_struct_leaves(struct)) + _struct_internal_count(struct) - 1
    delays = rng.uniform(lo, hi, size=n_links)
    return tree_from_struct(struct, delays)


# -- structural edits ---------------------------------------------------------

def _rebuild(T: TreeTopology, parent: dict, delay: dict) -> TreeTopology:
    return build_tree([(p, c, delay[(p, c)]) for c, p in parent.items()], T.root)


def contract(T: TreeTopology, v: str) -> TreeTopology:
    """Remove internal non-root node ``v``; its children move to its parent."""
    if v == T.root or T.is_leaf(v):
        raise InvariantViolation(f"{v} is not a contractible internal node")
    p = T.parent[v]
    parent, delay = dict(T.parent), dict(T.link_delay)
    up = delay.pop((p, v))
    del parent[v]
    for c in T.children(v):
        d = delay.pop((v, c))
        parent[c] = p
        delay[(p, c)] = d + up
    return _rebuild(T, parent, delay)


def split(T: TreeTopology, v: str, group: Iterable[str], new_delay: float | None = None) -> TreeTopology:
    """Insert a new node under ``v`` adopting the children in ``group``."""
    group = list(group)
    kids = T.children(v)
    if not (2 <= len(group) < len(kids)) or not set(group) <= set(kids):
        raise InvariantViolation("group must be a proper subset of at least 2 children")
    new_delay = new_delay if new_delay is not None else min(T.link_delay.values()) / 2
    w = _fresh_namer(T.nodes)()
    parent, delay = dict(T.parent), dict(T.link_delay)
    parent[w] = v
    delay[(v, w)] = new_delay
    for c in group:
        delay[(w, c)] = delay.pop((v, c))
        parent[c] = w
    return _rebuild(T, parent, delay)


def regraft(T: TreeTopology, u: str, target: str) -> TreeTopology:
    """Move the subtree at ``u`` under internal node ``target``.

    A former parent left with a single child is contracted away so the
    result keeps every internal node at two or more children.
    """
    if u == T.root:
        raise InvariantViolation("cannot regraft the root")
    p = T.parent[u]
    below = set(_subtree(T, u))
    if target in below or target == p or T.is_leaf(target):
        raise InvariantViolation(f"invalid regraft target {target} for {u}")
    parent, delay = dict(T.parent), dict(T.link_delay)
    d = delay.pop((p, u))
    parent[u] = target
    delay[(target, u)] = d
    rest = [c for c in T.children(p) if c != u]
    if len(rest) == 1:
        (w,) = rest
        if p == T.root:
            # the lone remaining child is internal (it contains target); fold it into the root
            up = delay.pop((p, w))
            del parent[w]
            for c in [c for c, q in parent.items() if q == w]:
                parent[c] = p
                delay[(p, c)] = delay.pop((w, c)) + up
        else:
            g = T.parent[p]
            up = delay.pop((g, p))
            del parent[p]
            parent[w] = g
            delay[(g, w)] = delay.pop((p, w)) + up
    return _rebuild(T, parent, delay)


def _subtree(T: TreeTopology, v: str) -> list:
    out, stack = [], [v]
    while stack:
        x = stack.pop()
        out.append(x)
        stack.extend(T.children(x))
    return out


def single_edit_neighbours(T: TreeTopology) -> list:
    """Every tree one contraction, split or regraft away from ``T``."""
    out = []
    for v in T.internal_nodes:
        if v != T.root:
            out.append(contract(T, v))
        kids = T.children(v)
        if len(kids) >= 3:
            for size in range(2, len(kids)):
                for group in itertools.combinations(kids, size):
                    out.append(split(T, v, group))
    for u in T.preorder[1:]:
        below = set(_subtree(T, u))
        for target in T.internal_nodes:
            if target in below or target == T.parent[u]:
                continue
            out.append(regraft(T, u, target))
    seen, uniq = {T.canonical}, []
    for t in out:
        if t.canonical not in seen:
            seen.add(t.canonical)
            uniq.append(t)
    return uniq


def local_edit_neighborhood(T: TreeTopology, limit: int, rng_seed=None) -> TopologySpace:
    """``T`` plus a seeded random sample of its single-edit neighbours."""
    if limit < 1:
        raise InvariantViolation("limit must be positive")
    rng = as_rng(rng_seed)
    nbrs = single_edit_neighbours(T)
    order = rng.permutation(len(nbrs)) if nbrs else []
    chosen = [T] + [nbrs[i] for i in order[: limit - 1]]
    return TopologySpace.from_trees(chosen)


# -- file format -----------------------------------------------------------

def format_topology(T: TreeTopology) -> str:
    lines = [f"root {T.root}"]
    lines += [f"{p} {c} {float(d)!r}" for p, c, d in T.edges()]
    return "\n".join(lines) + "\n"


def parse_topology(text: str) -> TreeTopology:
    root, edges = None, []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if root is None:
            if len(parts) != 2 or parts[0] != "root":
                raise InvariantViolation(f"line {n}: expected 'root <id>'")
            root = parts[1]
            continue
        if len(parts) != 3:
            raise InvariantViolation(f"line {n}: expected '<parent> <child> <delay-ms>'")
        try:
            d = float(parts[2])
        except ValueError as exc:
            raise InvariantViolation(f"line {n}: bad delay {parts[2]!r}") from exc
        edges.append((parts[0], parts[1], d))
    if root is None:
        raise InvariantViolation("topology file has no 'root' line")
    return build_tree(edges, root)


def read_topology(path) -> TreeTopology:
    return parse_topology(Path(path).read_text(encoding="utf-8"))


def write_topology(T: TreeTopology, path) -> None:
    Path(path).write_text(format_topology(T), encoding="utf-8")
