"""Information-theoretic instrumentation (all quantities in bits)."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attackers import candidate_losses, gibbs_from_losses, GibbsPosterior
from .errors import EmptySpace, InvariantViolation, PremiseViolated, SpaceTooLarge, SpaceTooSmall
from .metrics import link_symmetric_difference
from .observation import NoiseConfig, observe
from .topology import PathDelayVector, TopologySpace, TreeTopology, as_rng, true_vector

MI_MAX_LEAVES = 5
BOOTSTRAP_RESAMPLES = 20
WILSON_Z = 1.959963984540054


def identity_defense(T: TreeTopology) -> PathDelayVector:
    return true_vector(T)


def constant_defense(value: float = 0.0) -> Callable[[TreeTopology], PathDelayVector]:
    """Defense publishing the same vector for every topology."""

    def defend(T: TreeTopology) -> PathDelayVector:
        x = true_vector(T)
        return x.with_values(np.full(len(x.values), float(value)))

    return defend


@dataclass(frozen=True)
class ChannelSpec:
    """Uniform prior over ``space``, a defense, and the noisy observation channel.

    Space members are unit-delay shapes; ``link_delay`` rescales them before
    the defense sees them.
    """
    space: TopologySpace
    defense: Callable[[TreeTopology], PathDelayVector] = identity_defense
    noise: NoiseConfig = NoiseConfig(0.0)
    quantization: float = 0.05
    link_delay: float = 1.0

    def __post_init__(self):
        if not self.quantization > 0:
            raise InvariantViolation("quantization must be positive")
        if len(self.space) == 0:
            raise EmptySpace("channel space is empty")

    def instance(self, i: int) -> TreeTopology:
        return self.space[i].scaled(self.link_delay)

    def published(self, i: int) -> PathDelayVector:
        return self.defense(self.instance(i))

    def sample(self, xt: PathDelayVector, rng) -> PathDelayVector:
        return observe(xt, self.noise.epsilon, rng)

    def quantize(self, x: PathDelayVector) -> tuple:
        return tuple(np.round(x.values / self.quantization).astype(np.int64).tolist())


def fano_bound(mi_bits: float, space_size: int) -> float:
    """``min(1, (I + 1) / log2 |A|)``."""
    if space_size < 2:
        raise SpaceTooSmall("the bound needs at least two topologies")
    if mi_bits < 0:
        raise InvariantViolation("mutual information must be >= 0")
    return min(1.0, (mi_bits + 1.0) / math.log2(space_size))


def _entropy_bits(counts) -> float:
    c = np.asarray(list(counts), dtype=float)
    c = c[c > 0]
    p = c / c.sum()
    return float(-(p * np.log2(p)).sum())


def plugin_mutual_information(labels, symbols, n_classes: int) -> float:
    """``log2 n - H(A | X)`` from paired samples with a balanced uniform prior."""
    by_symbol: dict = {}
    for a, s in zip(labels, symbols):
        by_symbol.setdefault(s, Counter())[a] += 1
    n = len(labels)
    h_cond = sum(sum(c.values()) / n * _entropy_bits(c.values()) for c in by_symbol.values())
    return max(0.0, math.log2(n_classes) - h_cond)


def mutual_information(ch: ChannelSpec, samples_per_topology: int, rng_seed=None):
    """Plug-in ``I(A; X*)`` on the quantized channel, with a bootstrap std-error.

    Every topology is sampled equally often so the empirical prior is exactly
    uniform; the bootstrap resamples within each topology.
    """
    if len(ch.space.leaf_set) > MI_MAX_LEAVES:
        raise SpaceTooLarge(f"mutual information is only computed up to {MI_MAX_LEAVES} leaves")
    if samples_per_topology < 1:
        raise InvariantViolation("samples_per_topology must be >= 1")
    rng = as_rng(rng_seed)
    n = len(ch.space)
    symbols = []
    for i in range(n):
        xt = ch.published(i)
        symbols.append([ch.quantize(ch.sample(xt, rng)) for _ in range(samples_per_topology)])
    labels = np.repeat(np.arange(n), samples_per_topology)
    flat = [s for row in symbols for s in row]
    mi = plugin_mutual_information(labels, flat, n)
    boots = []
    for _ in range(BOOTSTRAP_RESAMPLES):
        pick = rng.integers(samples_per_topology, size=(n, samples_per_topology))
        resampled = [symbols[i][j] for i in range(n) for j in pick[i]]
        boots.append(plugin_mutual_information(labels, resampled, n))
    return mi, float(np.std(boots, ddof=1))


def expected_structural_divergence(ch: ChannelSpec, T: TreeTopology, beta: float, mc: int,
                                   rng_seed=None, attacker=None):
    """Mean and std-error of ``E_{A' ~ P_beta(.|X*)}[d(T, A')]`` over channel draws.

    ``T`` keeps its own delays. ``attacker`` optionally replaces the Gibbs
    expectation by the distance to a point estimate ``attacker(x_star)``.
    """
    if len(ch.space) == 0:
        raise EmptySpace("channel space is empty")
    if T.canonical not in ch.space:
        raise InvariantViolation("T must belong to the channel space")
    if mc < 1:
        raise InvariantViolation("mc must be >= 1")
    rng = as_rng(rng_seed)
    dist = np.array([link_symmetric_difference(T, t) for t in ch.space], dtype=float)
    xt = ch.defense(T)
    vals = np.empty(mc)
    for s in range(mc):
        xs = ch.sample(xt, rng)
        if attacker is None:
            vals[s] = gibbs_from_losses(ch.space, candidate_losses(xs, ch.space), beta).expectation(dist)
        else:
            vals[s] = link_symmetric_difference(T, attacker(xs))
    se = float(np.std(vals, ddof=1) / math.sqrt(mc)) if mc > 1 else 0.0
    return float(vals.mean()), se


@dataclass(frozen=True)
class EntropyBoundReport:
    beta: float
    C_d: float
    expected_distance: float
    entropy: float
    bound_rhs: float
    holds: bool

    @property
    def margin(self) -> float:
        return self.entropy - self.bound_rhs


def distance_gibbs(T: TreeTopology, space: TopologySpace, beta: float) -> GibbsPosterior:
    """Posterior with weights proportional to ``exp(-beta * d(T, A'))``."""
    dist = np.array([link_symmetric_difference(T, t) for t in space], dtype=float)
    return gibbs_from_losses(space, dist, beta)


def check_entropy_bound(posterior: GibbsPosterior | None, T: TreeTopology, beta: float,
                        space_size: int | None = None, space: TopologySpace | None = None) -> EntropyBoundReport:
    """Evaluate ``H >= E[d] / C_d - log2 C_d`` with ``C_d = log2|A| / beta``.

    The posterior must be the distance-Gibbs one; if ``posterior`` is None it
    is built from ``space``.
    """
    if posterior is None:
        if space is None:
            raise InvariantViolation("need a posterior or a space")
        posterior = distance_gibbs(T, space, beta)
    n = space_size if space_size is not None else len(posterior.support)
    if n < 2:
        raise SpaceTooSmall("the bound needs at least two topologies")
    log_n = math.log2(n)
    if beta > log_n:
        raise PremiseViolated(f"beta={beta} exceeds log2|A|={log_n:.4f}")
    if beta < 0:
        raise InvariantViolation("beta must be >= 0")
    p = posterior.weights
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    e_d = float(np.dot(p, posterior.losses))
    if beta == 0:
        C_d, rhs = math.inf, -math.inf
    else:
        C_d = log_n / beta
        rhs = e_d / C_d - math.log2(C_d)
    return EntropyBoundReport(beta, C_d, e_d, entropy, rhs, entropy >= rhs - 1e-9)


def gibbs_map_attacker(space: TopologySpace):
    """Point attacker returning the loss-minimizing member (beta-free MAP)."""

    def attack(x_star: PathDelayVector) -> TreeTopology:
        return gibbs_from_losses(space, candidate_losses(x_star, space), 1.0).map_topology

    return attack


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple:
    if trials < 1:
        raise InvariantViolation("trials must be >= 1")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def empirical_success_probability(ch: ChannelSpec, attacker=None, trials: int = 1000, rng_seed=None):
    """Fraction of exact recoveries with a Wilson 95% interval.

    Each trial draws a topology uniformly, publishes it through the defense
    and the channel, and compares the attacker's answer by canonical form.
    """
    if trials < 1:
        raise InvariantViolation("trials must be >= 1")
    attacker = attacker or gibbs_map_attacker(ch.space)
    rng = as_rng(rng_seed)
    published = {}
    hits = 0
    for _ in range(trials):
        i = int(rng.integers(len(ch.space)))
        if i not in published:
            published[i] = ch.published(i)
        guess = attacker(ch.sample(published[i], rng))
        hits += guess.canonical == ch.space.canonical_forms[i]
    return hits / trials, wilson_interval(hits, trials)
