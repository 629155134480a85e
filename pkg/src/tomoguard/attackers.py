"""Topology inference attackers.

* ``gibbs_posterior``: loss-weighted posterior over a candidate set.
* ``rnj_infer``: agglomerative reconstruction from shared-path lengths.
* ``mle_infer``: penalized likelihood search by reversible-jump MCMC.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (ChainDiverged, EmptySupport, InvariantViolation, LeafSetMismatch,
                     NotRealizable)
from .observation import is_realizable
from .topology import (LinkDelays, PathDelayVector, TopologySpace, TreeTopology, _fresh_namer,
                       _subtree, as_rng, build_tree, contract, enumerate_topologies,
                       local_edit_neighborhood, regraft, routing_matrix, split, to_struct, tree_from_struct)

FIT = "fit"
NNLS_MAX_ITER = 200
NNLS_TOL = 1e-8
ENUMERATE_UP_TO = 5


def _check_leaves(x: PathDelayVector, T: TreeTopology):
    if tuple(x.leaves) != tuple(T.leaves):
        raise LeafSetMismatch(f"observation leaves {x.leaves} differ from tree leaves {T.leaves}")


def fit_delays(x: PathDelayVector, T: TreeTopology):
    """Nonnegative least-squares fit of ``x`` on the shared links of ``T``.

    Returns ``(mu, loss)`` where ``mu`` covers only the links with at least
    two leaves below them (pendant links never carry shared delay).
    """
    _check_leaves(x, T)
    return kernels.nnls_fit(T.informative_design, x.values, 0.0, NNLS_MAX_ITER, NNLS_TOL)


def path_loss(x_star: PathDelayVector, T: TreeTopology, mu_fit=FIT) -> float:
    """Squared residual ``||x* - A mu||^2`` for a fitted or supplied ``mu``."""
    _check_leaves(x_star, T)
    if isinstance(mu_fit, str):
        if mu_fit != FIT:
            raise InvariantViolation(f"unknown mu mode {mu_fit!r}")
        return float(fit_delays(x_star, T)[1])
    mu = mu_fit.values if isinstance(mu_fit, LinkDelays) else np.asarray(mu_fit, dtype=float)
    A = routing_matrix(T).entries.astype(float)
    r = x_star.values - A @ mu
    return float(r @ r)


def candidate_losses(x_star: PathDelayVector, support: TopologySpace) -> np.ndarray:
    if tuple(support.leaf_set) != tuple(x_star.leaves):
        raise LeafSetMismatch("support leaf set differs from the observation's")
    return kernels.batch_fit_losses(support.designs, x_star.values, 0.0, NNLS_MAX_ITER, NNLS_TOL)


# -- Gibbs posterior ------------------------------------------------------------

@dataclass
class GibbsPosterior:
    support: TopologySpace
    weights: np.ndarray
    beta: float
    log_Z: float
    losses: np.ndarray

    def __post_init__(self):
        self._internal = None

    def _internal_counts(self) -> np.ndarray:
        if self._internal is None:
            self._internal = np.array([len(t.internal_nodes) for t in self.support])
        return self._internal

    @property
    def map_index(self) -> int:
        """Index of the MAP member.

        The MAP is the minimum-loss candidate. Near-equal losses (relative
        1e-9) are resolved toward the fewest internal nodes, then the
        smallest canonical form, so zero-length refinements of a perfect fit
        never displace it.
        """
        L = self.losses
        tol = 1e-9 * max(1.0, float(np.min(np.abs(L)))) + 1e-12
        tied = np.flatnonzero(L <= L.min() + tol)
        counts = self._internal_counts()
        forms = self.support.canonical_forms
        return int(min(tied, key=lambda i: (counts[i], forms[i])))

    @property
    def map_topology(self) -> TreeTopology:
        return self.support[self.map_index]

    def sample(self, rng) -> int:
        return int(as_rng(rng).choice(len(self.weights), p=self.weights))

    def expectation(self, values) -> float:
        return float(np.dot(self.weights, values))


def gibbs_from_losses(support: TopologySpace, losses, beta: float) -> GibbsPosterior:
    if len(support) == 0:
        raise EmptySupport("Gibbs posterior needs a nonempty support")
    if not beta >= 0:
        raise InvariantViolation(f"beta must be >= 0, got {beta}")
    losses = np.asarray(losses, dtype=np.float64)
    a = -beta * (losses - losses.min())
    amax = a.max()
    s = np.exp(a - amax).sum()
    weights = np.exp(a - amax) / s
    log_Z = float(-beta * losses.min() + amax + np.log(s))
    return GibbsPosterior(support, weights, float(beta), log_Z, losses)


def gibbs_posterior(x_star: PathDelayVector, support: TopologySpace, beta: float,
                    mu_mode=FIT) -> GibbsPosterior:
    """``P(A') = exp(-beta * L(x*, A')) / Z`` over ``support``."""
    if len(support) == 0:
        raise EmptySupport("Gibbs posterior needs a nonempty support")
    if mu_mode == FIT:
        losses = candidate_losses(x_star, support)
    else:
        losses = np.array([path_loss(x_star, t, mu_mode) for t in support])
    return gibbs_from_losses(support, losses, beta)


def candidate_space(x_star: PathDelayVector, limit: int = 50, rng_seed=None,
                    rnj_delta: float | None = None) -> TopologySpace:
    """Support for the Gibbs attacker.

    Small leaf sets are enumerated exhaustively; larger ones use a seeded
    local-edit neighbourhood around the RNJ estimate.
    """
    leaves = x_star.leaves
    if len(leaves) <= ENUMERATE_UP_TO:
        return enumerate_topologies(leaves)
    center = rnj_infer(x_star, RnjConfig(delta=rnj_delta, allow_unary_root=False))
    return local_edit_neighborhood(center, limit, rng_seed)


# -- rooted neighbour joining ----------------------------------------------------

@dataclass(frozen=True)
class RnjConfig:
    delta: float | None = None  # None: smallest gap between distinct shared values
    allow_unary_root: bool = True

    def __post_init__(self):
        if self.delta is not None and not self.delta > 0:
            raise InvariantViolation(f"delta must be positive, got {self.delta}")


def default_delta(values: np.ndarray) -> float:
    levels = np.unique(np.concatenate([[0.0], np.asarray(values, dtype=float)]))
    gaps = np.diff(levels)
    gaps = gaps[gaps > 0]
    if gaps.size:
        return float(gaps.min())
    return 1e-9


def rnj_infer(shared: PathDelayVector, cfg: RnjConfig | None = None) -> TreeTopology:
    """Rebuild a tree by repeatedly joining the pair with the largest shared length.

    Every node whose shared value with the leading node lies within
    ``delta/2`` of the maximum joins the same new parent; earlier parents
    created within ``delta/2`` of the new depth are absorbed into it.
    """
    cfg = cfg or RnjConfig()
    ok, triple = is_realizable(shared, rtol=1e-7)
    if not ok:
        raise NotRealizable(f"shared-path vector violates the three-point condition at {triple}")
    leaves = list(shared.leaves)
    delta = cfg.delta if cfg.delta is not None else default_delta(shared.values)
    half = delta / 2
    slack = 1e-12 * max(1.0, float(np.max(shared.values, initial=0.0)))
    n = len(leaves)

    S = {}
    M = shared.as_matrix()
    for i in range(n):
        for j in range(i + 1, n):
            S[(i, j)] = float(M[i, j])

    def sim(a, b):
        return S[(a, b)] if a < b else S[(b, a)]

    active = list(range(n))
    children: dict[int, list[int]] = {}
    depth: dict[int, float] = {}
    nxt = n
    while len(active) > 1:
        best, bi = None, -1
        for x in range(len(active)):
            for y in range(x + 1, len(active)):
                v = sim(active[x], active[y])
                if best is None or v > best:
                    best, bi = v, active[x]
        group = [bi] + [a for a in active if a != bi and sim(bi, a) >= best - half - slack]
        kids = []
        for g in group:
            if g in children and depth[g] - best <= half + slack:
                kids.extend(children.pop(g))
                depth.pop(g)
            else:
                kids.append(g)
        w = nxt
        nxt += 1
        children[w] = kids
        depth[w] = best
        rest = [a for a in active if a not in group]
        for o in rest:
            S[(min(w, o), max(w, o))] = max(sim(g, o) for g in group)
        active = rest + [w]

    top = active[0]
    root_depth = depth[top]
    leaf_names = set(leaves)
    fresh = _fresh_namer(leaf_names)
    root_name = "s" if "s" not in leaf_names else fresh()
    names = {i: leaves[i] for i in range(n)}
    edges = []
    if cfg.allow_unary_root and root_depth >= half:
        names[top] = fresh()
        edges.append((root_name, names[top], root_depth))
    else:
        names[top] = root_name
        depth[top] = 0.0

    stack = [top]
    while stack:
        v = stack.pop()
        for c in sorted(children[v]):
            if c in children:
                names[c] = fresh()
                edges.append((names[v], names[c], depth[c] - depth[v]))
                stack.append(c)
            else:
                edges.append((names[v], names[c], delta))
    return build_tree(edges, root_name)


# -- penalized likelihood by RJ-MCMC ------------------------------------------------

@dataclass(frozen=True)
class MleConfig:
    lambda_pen: float | None = None  # None: 0.5 * log2(k), k = number of leaf pairs
    iters: int = 10000
    proposal_mix: tuple = (0.3, 0.3, 0.4)  # birth, death, update
    sigma2: float = 1.0
    rng_seed: int | None = None

    def __post_init__(self):
        if len(self.proposal_mix) != 3 or min(self.proposal_mix) < 0:
            raise InvariantViolation("proposal_mix needs three nonnegative probabilities")
        if abs(sum(self.proposal_mix) - 1.0) > 1e-9:
            raise InvariantViolation("proposal_mix must sum to 1")
        if not self.sigma2 > 0:
            raise InvariantViolation("sigma2 must be positive")
        if self.iters < 0:
            raise InvariantViolation("iters must be >= 0")

    def penalty(self, k: int) -> float:
        if self.lambda_pen is not None:
            return float(self.lambda_pen)
        return 0.5 * math.log2(k) if k > 1 else 0.0


@dataclass
class MleResult:
    tree: TreeTopology
    log_target: float
    initial_log_target: float
    proposed: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)
    states_visited: int = 0

    @property
    def acceptance_rate(self) -> dict:
        return {m: (self.accepted[m] / self.proposed[m] if self.proposed[m] else 0.0)
                for m in self.proposed}


def penalized_log_likelihood(x: PathDelayVector, T: TreeTopology, sigma2: float, lam: float) -> float:
    """Gaussian log-likelihood at the fitted delays minus ``lam`` per internal node."""
    k = len(x.values)
    loss = path_loss(x, T)
    return -loss / (2 * sigma2) - 0.5 * k * math.log(2 * math.pi * sigma2) - lam * len(T.internal_nodes)


class _Chain:
    """Per-state caches so repeated visits cost dictionary lookups only."""

    def __init__(self, x: PathDelayVector, sigma2: float, lam: float):
        self.x, self.sigma2, self.lam = x, sigma2, lam
        self.score_cache: dict[str, float] = {}
        self.move_cache: dict[tuple, TreeTopology] = {}
        self.info_cache: dict[str, tuple] = {}

    def score(self, T: TreeTopology) -> float:
        key = T.canonical
        if key not in self.score_cache:
            self.score_cache[key] = penalized_log_likelihood(self.x, T, self.sigma2, self.lam)
        return self.score_cache[key]

    def info(self, T: TreeTopology):
        key = T.canonical
        if key not in self.info_cache:
            births = [v for v in T.internal_nodes if len(T.children(v)) >= 3]
            deaths = [v for v in T.internal_nodes if v != T.root]
            movers = list(T.preorder[1:])
            self.info_cache[key] = (births, deaths, movers)
        return self.info_cache[key]

    def apply(self, T: TreeTopology, move: tuple) -> TreeTopology:
        key = (T.canonical,) + move
        if key not in self.move_cache:
            kind = move[0]
            if kind == "birth":
                out = split(T, move[1], move[2])
            elif kind == "death":
                out = contract(T, move[1])
            else:
                out = regraft(T, move[1], move[2])
            self.move_cache[key] = tree_from_struct(to_struct(out))
        return self.move_cache[key]


def _birth_log_q(T: TreeTopology, v: str, n_births: int, group_size: int, p_birth: float) -> float:
    c = len(T.children(v))
    return (math.log(p_birth) - math.log(n_births) - math.log(c - 2)
            - math.log(math.comb(c, group_size)))


def mle_infer(x_star: PathDelayVector, leaf_set=None, cfg: MleConfig | None = None) -> MleResult:
    """Search for the tree maximizing the penalized log-likelihood.

    The chain starts at the star. Birth splits off a random subset of an
    internal node's children under a new node, death contracts an internal
    non-root node, update regrafts a random subtree. Birth and death carry
    the Hastings correction; update is treated as symmetric.
    """
    cfg = cfg or MleConfig()
    leaves = tuple(leaf_set) if leaf_set is not None else tuple(x_star.leaves)
    if tuple(x_star.leaves) != tuple(leaves):
        raise LeafSetMismatch("leaf_set does not match the observation")
    if len(leaves) < 2:
        raise InvariantViolation("need at least two leaves")
    k = len(x_star.values)
    lam = cfg.penalty(k)
    chain = _Chain(x_star, cfg.sigma2, lam)
    rng = as_rng(cfg.rng_seed)
    p_b, p_d, p_u = cfg.proposal_mix

    state = tree_from_struct(tuple(leaves))
    cur = chain.score(state)
    result = MleResult(state, cur, cur, {"birth": 0, "death": 0, "update": 0},
                       {"birth": 0, "death": 0, "update": 0})
    if len(leaves) == 2:
        result.states_visited = 1
        return result

    invalid_run = 0
    for _ in range(cfg.iters):
        births, deaths, movers = chain.info(state)
        u = rng.random()
        kind = "birth" if u < p_b else ("death" if u < p_b + p_d else "update")
        move, log_q_ratio = None, 0.0
        if kind == "birth" and births:
            v = births[int(rng.integers(len(births)))]
            kids = state.children(v)
            c = len(kids)
            s = int(rng.integers(2, c))
            group = tuple(sorted(kids[i] for i in rng.choice(c, size=s, replace=False)))
            move = ("birth", v, group)
        elif kind == "death" and deaths:
            v = deaths[int(rng.integers(len(deaths)))]
            move = ("death", v)
        elif kind == "update":
            u_node = movers[int(rng.integers(len(movers)))]
            below = set(_subtree(state, u_node))
            targets = [t for t in state.internal_nodes
                       if t not in below and t != state.parent[u_node]]
            if targets:
                move = ("update", u_node, targets[int(rng.integers(len(targets)))])
        if move is None:
            invalid_run += 1
            if invalid_run >= 1000:
                raise ChainDiverged("1000 consecutive invalid proposals")
            continue
        invalid_run = 0
        result.proposed[kind] += 1
        new = chain.apply(state, move)
        if kind == "birth":
            _, new_deaths, _ = chain.info(new)
            log_q_ratio = math.log(p_d) - math.log(len(new_deaths)) - _birth_log_q(
                state, move[1], len(births), len(move[2]), p_b)
        elif kind == "death":
            new_births, _, _ = chain.info(new)
            parent = state.parent[move[1]]
            s = len(state.children(move[1]))
            # in the contracted tree the former parent holds the merged children
            log_q_ratio = _birth_log_q(new, _find_node(new, state.leafset(parent)),
                                       len(new_births), s, p_b) - (math.log(p_d) - math.log(len(deaths)))
        new_score = chain.score(new)
        log_alpha = new_score - cur + log_q_ratio
        if log_alpha >= 0 or rng.random() < math.exp(log_alpha):
            state, cur = new, new_score
            result.accepted[kind] += 1
            if cur > result.log_target:
                result.tree, result.log_target = state, cur
    result.states_visited = len(chain.score_cache)
    return result


def _find_node(T: TreeTopology, leafset) -> str:
    for v in T.internal_nodes:
        if T.leafset(v) == leafset:
            return v
    raise InvariantViolation("no node with the requested leaf set")
