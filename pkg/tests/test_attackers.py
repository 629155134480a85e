import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import nnls_residual
from tomoguard.attackers import (MleConfig, RnjConfig, candidate_losses, candidate_space,
                                 default_delta, gibbs_posterior, mle_infer, path_loss,
                                 penalized_log_likelihood, rnj_infer)
from tomoguard.errors import (EmptySupport, InvariantViolation, LeafSetMismatch, NotRealizable)
from tomoguard.observation import observe
from tomoguard.topology import (PathDelayVector, Role, TopologySpace, build_tree, enumerate_topologies,
                                link_delays, pair_index_for, random_tree, true_vector)

EXAMPLE = [("s", "u", 2), ("u", "v1", 1), ("u", "v2", 1), ("s", "v3", 3)]


def units(l, seed):
    return random_tree(l, seed).scaled(1 / 500)


# -- path loss and the Gibbs posterior --

def test_path_loss_zero_at_truth():
    T = build_tree(EXAMPLE, "s")
    x = true_vector(T)
    assert path_loss(x, T) == pytest.approx(0.0, abs=1e-12)
    assert path_loss(x, T, link_delays(T)) == 0.0


def test_path_loss_supplied_mu():
    T = build_tree(EXAMPLE, "s")
    x = true_vector(T)
    # mu doubled on the shared link gives residual (2, 0, 0)
    assert path_loss(x, T, [4, 1, 1, 3]) == pytest.approx(4.0)
    with pytest.raises(InvariantViolation):
        path_loss(x, T, "exact")


@pytest.mark.parametrize("seed", range(5))
def test_candidate_losses_match_scipy(seed):
    x = observe(true_vector(units(4, seed)), 0.1, seed)
    space = enumerate_topologies(x.leaves)
    ours = candidate_losses(x, space)
    ref = [nnls_residual(t, x) for t in space]
    np.testing.assert_allclose(ours, ref, rtol=1e-6, atol=1e-10)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 50))
@settings(max_examples=30)
def test_gibbs_pairwise_ratio(seed, beta):
    x = observe(true_vector(units(4, seed)), 0.1, seed)
    post = gibbs_posterior(x, enumerate_topologies(x.leaves), beta)
    assert post.weights.sum() == pytest.approx(1.0)
    L, w = post.losses, post.weights
    i, j = 0, len(w) - 1
    assert math.log(w[i]) - math.log(w[j]) == pytest.approx(-beta * (L[i] - L[j]), abs=1e-9)
    assert post.log_Z == pytest.approx(math.log(np.exp(-beta * L).sum()), abs=1e-9)


def test_gibbs_beta_zero_uniform_and_map():
    T = units(4, 2)
    x = true_vector(T)
    space = enumerate_topologies(x.leaves)
    post = gibbs_posterior(x, space, 0.0)
    np.testing.assert_allclose(post.weights, 1 / len(space))
    assert post.map_topology.canonical == T.canonical
    assert post.sample(np.random.default_rng(0)) in range(len(space))


def test_gibbs_errors():
    x = true_vector(units(3, 0))
    with pytest.raises(EmptySupport):
        gibbs_posterior(x, TopologySpace(x.leaves, []), 1.0)
    with pytest.raises(InvariantViolation):
        gibbs_posterior(x, enumerate_topologies(x.leaves), -1.0)
    with pytest.raises(LeafSetMismatch):
        gibbs_posterior(x, enumerate_topologies(["a", "b", "c"]), 1.0)


def test_candidate_space_rules():
    small = true_vector(units(5, 1))
    assert len(candidate_space(small)) == 236
    big = true_vector(units(7, 1))
    space = candidate_space(big, limit=30, rng_seed=4)
    assert len(space) <= 30
    assert units(7, 1).canonical in space.canonical_forms
    assert space.canonical_forms == candidate_space(big, limit=30, rng_seed=4).canonical_forms


# -- RNJ --

def test_rnj_example():
    T = build_tree(EXAMPLE, "s")
    assert rnj_infer(true_vector(T)).canonical == T.canonical


def test_rnj_star_and_delta():
    x = PathDelayVector(np.zeros(3), Role.OBSERVED, pair_index_for(["a", "b", "c"]))
    assert rnj_infer(x).canonical == "(a,b,c)"
    assert default_delta(np.array([0.0, 0.3, 0.3, 1.0])) == pytest.approx(0.3)
    with pytest.raises(InvariantViolation):
        RnjConfig(delta=0)


def test_rnj_rejects_unrealizable():
    x = PathDelayVector(np.array([5.0, 3.0, 4.0]), Role.OBSERVED, pair_index_for(["i", "j", "k"]))
    with pytest.raises(NotRealizable):
        rnj_infer(x)


def test_rnj_coarse_delta_merges_levels():
    # shared lengths 1.0 and 1.05 collapse into one node once delta exceeds 0.1
    T = build_tree([("s", "a", 1), ("a", "b", 0.05), ("b", "v1", 1), ("b", "v2", 1),
                    ("a", "v3", 1), ("s", "v4", 1)], "s")
    x = true_vector(T)
    assert rnj_infer(x).canonical == T.canonical
    assert rnj_infer(x, RnjConfig(delta=0.2)).canonical == "((v1,v2,v3),v4)"


@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_rnj_exact_noiseless(l, seed):
    T = random_tree(l, seed)
    assert rnj_infer(true_vector(T)).canonical == T.canonical
    assert rnj_infer(true_vector(T), RnjConfig(allow_unary_root=False)).canonical == T.canonical


# -- MLE --

def test_mle_defaults():
    cfg = MleConfig()
    assert cfg.iters == 10000
    assert cfg.penalty(6) == pytest.approx(0.5 * math.log2(6))
    assert cfg.proposal_mix == (0.3, 0.3, 0.4)
    with pytest.raises(InvariantViolation):
        MleConfig(proposal_mix=(0.5, 0.5, 0.5))
    with pytest.raises(InvariantViolation):
        MleConfig(sigma2=0)


def test_penalized_likelihood_formula():
    T = units(4, 3)
    x = true_vector(T)
    got = penalized_log_likelihood(x, T, 0.5, 2.0)
    assert got == pytest.approx(-0.5 * 6 * math.log(math.pi) - 2.0 * len(T.internal_nodes))


@pytest.mark.parametrize("seed", range(6))
def test_mle_matches_exhaustive_argmax(seed):
    T = units(4, 300 + seed)
    x = true_vector(T)
    cfg = MleConfig(sigma2=1e-4, iters=3000, rng_seed=seed)
    space = enumerate_topologies(x.leaves)
    lam = cfg.penalty(len(x.values))
    scores = [penalized_log_likelihood(x, t, cfg.sigma2, lam) for t in space]
    res = mle_infer(x, cfg=cfg)
    assert res.tree.canonical == space[int(np.argmax(scores))].canonical
    assert res.log_target == pytest.approx(max(scores))
    assert res.log_target >= res.initial_log_target
    assert set(res.acceptance_rate) == {"birth", "death", "update"}


def test_mle_two_leaves_and_mismatch():
    x = true_vector(units(2, 0))
    assert mle_infer(x).tree.canonical == "(v1,v2)"
    with pytest.raises(LeafSetMismatch):
        mle_infer(x, leaf_set=["a", "b"])


def test_mle_deterministic():
    x = observe(true_vector(units(5, 8)), 0.05, 1)
    cfg = MleConfig(sigma2=1e-2, iters=500, rng_seed=9)
    a, b = mle_infer(x, cfg=cfg), mle_infer(x, cfg=cfg)
    assert a.tree.canonical == b.tree.canonical and a.accepted == b.accepted
