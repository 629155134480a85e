import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import relu_gauss_mean, three_point_ok
from tomoguard.attackers import RnjConfig, rnj_infer
from tomoguard.errors import InvariantViolation, NegativeEntry
from tomoguard.observation import (NoiseConfig, apply_positive_noise, is_realizable, observe,
                                   project_realizable)
from tomoguard.topology import PathDelayVector, Role, pair_index_for, random_tree, true_vector


def vec(values, leaves):
    return PathDelayVector(np.asarray(values, dtype=float), Role.PERTURBED, pair_index_for(leaves))


def raw_vectors(min_leaves=2, max_leaves=7):
    return st.integers(min_leaves, max_leaves).flatmap(
        lambda n: st.lists(st.floats(0, 100, allow_nan=False), min_size=n * (n - 1) // 2,
                           max_size=n * (n - 1) // 2).map(
            lambda v: vec(v, [f"v{i + 1}" for i in range(n)])))


def test_zero_noise_is_identity():
    x = true_vector(random_tree(5, 1))
    out = apply_positive_noise(x, NoiseConfig(0.0, 3))
    assert out.values.tolist() == x.values.tolist()
    assert out.role is Role.OBSERVED


def test_relu_noise_mean():
    eps, n = 0.1, 100_000
    x = vec([1.0], ["a", "b"])
    rng = np.random.default_rng(7)
    added = np.array([apply_positive_noise(x, NoiseConfig(eps), rng).values[0] - 1.0 for _ in range(n)])
    # sd of max(0, d) for d ~ N(0, eps^2): eps * sqrt(1/2 - 1/(2 pi))
    sd = eps * math.sqrt(0.5 - 1 / (2 * math.pi))
    assert abs(added.mean() - relu_gauss_mean(eps)) < 3 * sd / math.sqrt(n)
    assert relu_gauss_mean(eps) == pytest.approx(0.0399, abs=1e-4)


@given(raw_vectors(), st.floats(0, 5), st.integers(0, 2 ** 32 - 1))
def test_noise_never_decreases(x, eps, seed):
    out = apply_positive_noise(x, NoiseConfig(eps, seed))
    assert np.all(out.values >= x.values)


def test_negative_epsilon_rejected():
    with pytest.raises(InvariantViolation):
        NoiseConfig(-0.1)


def test_hand_projection():
    x = vec([5, 3, 4], ["i", "j", "k"])
    assert project_realizable(x).values.tolist() == [5, 4, 4]
    ok, triple = is_realizable(x)
    assert not ok and triple == ("i", "j", "k")


def test_projection_examples():
    x = true_vector(random_tree(6, 2))
    assert project_realizable(x).values.tolist() == x.values.tolist()
    flat = vec([3.0] * 10, ["a", "b", "c", "d", "e"])
    assert project_realizable(flat).values.tolist() == flat.values.tolist()
    assert is_realizable(vec([2.0], ["a", "b"])) == (True, None)


def test_projection_rejects_negative():
    x = PathDelayVector.__new__(PathDelayVector)
    object.__setattr__(x, "values", np.array([1.0, -1.0, 0.0]))
    object.__setattr__(x, "role", Role.PERTURBED)
    object.__setattr__(x, "pair_index", pair_index_for(["a", "b", "c"]))
    with pytest.raises(NegativeEntry):
        project_realizable(x)


@given(raw_vectors())
def test_projection_properties(x):
    p = project_realizable(x)
    assert three_point_ok(p.as_matrix())
    assert is_realizable(p)[0]
    assert project_realizable(p).values.tolist() == p.values.tolist()
    # nearest from above: single linkage never lowers a similarity
    assert np.all(p.values >= x.values - 1e-12)


def test_projection_idempotent_1000():
    rng = np.random.default_rng(0)
    failures = 0
    for _ in range(1000):
        n = int(rng.integers(3, 9))
        x = vec(rng.uniform(0, 10, n * (n - 1) // 2), [f"v{i + 1}" for i in range(n)])
        p = project_realizable(x)
        failures += project_realizable(p).values.tolist() != p.values.tolist()
    assert failures == 0


@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1), st.floats(0, 0.3))
def test_projected_vectors_round_trip_through_rnj(l, seed, eps):
    T = random_tree(l, seed).scaled(1 / 500)
    p = observe(true_vector(T), eps, seed)
    U = rnj_infer(p, RnjConfig())
    np.testing.assert_allclose(true_vector(U).values, p.values, rtol=1e-9, atol=1e-12)
