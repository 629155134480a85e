"""Attacker observation channel: one-sided noise, then tree projection.

Shared-path lengths are similarities (siblings share more than cousins), so
the realizability test is the similarity form of the three-point condition:
in every leaf triple the two smallest values coincide.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvariantViolation, NegativeEntry
from .topology import PathDelayVector, Role, as_rng

REALIZABLE_RTOL = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    epsilon: float = 0.1
    rng_seed: int | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise InvariantViolation(f"epsilon must be >= 0, got {self.epsilon}")


def apply_positive_noise(xt: PathDelayVector, cfg: NoiseConfig, rng=None) -> PathDelayVector:
    """``X*_ij = X~_ij + max(0, delta_ij)`` with ``delta_ij ~ N(0, eps^2)``.

    ``rng`` overrides ``cfg.rng_seed`` so callers can stream many draws from
    one generator.
    """
    rng = as_rng(cfg.rng_seed if rng is None else rng)
    if cfg.epsilon == 0:
        return xt.with_values(xt.values, Role.OBSERVED)
    delta = rng.normal(0.0, cfg.epsilon, size=xt.values.shape)
    return xt.with_values(xt.values + np.maximum(delta, 0.0), Role.OBSERVED)


def _check_nonneg(x: PathDelayVector):
    if np.any(x.values < 0):
        raise NegativeEntry("shared-path values must be non-negative")


def project_matrix(S: np.ndarray) -> np.ndarray:
    """Single-linkage cophenetic projection of a symmetric similarity matrix."""
    return kernels.single_linkage_cophenetic(np.ascontiguousarray(S, dtype=np.float64))


def project_values(values: np.ndarray, n_leaves: int) -> np.ndarray:
    """Projection on the condensed (pair-ordered) representation."""
    iu = np.triu_indices(n_leaves, 1)
    S = np.zeros((n_leaves, n_leaves))
    S[iu] = values
    S.T[iu] = values
    return project_matrix(S)[iu]


def project_realizable(x: PathDelayVector) -> PathDelayVector:
    """Map ``x`` to the nearest-from-above tree-realizable similarity vector.

    Clusters are merged greedily by largest similarity (cluster similarity is
    the max over member pairs); every pair gets the level at which its two
    leaves were first joined. Inputs that already satisfy the three-point
    condition are returned unchanged.
    """
    _check_nonneg(x)
    n = len(x.leaves)
    if n < 3:
        return x.with_values(x.values, Role.OBSERVED)
    return x.with_values(project_values(x.values, n), Role.OBSERVED)


def is_realizable(x: PathDelayVector, rtol: float = REALIZABLE_RTOL):
    """Return ``(ok, first_violating_triple)``; the triple is ``None`` when ok."""
    _check_nonneg(x)
    leaves = x.leaves
    if len(leaves) < 3:
        return True, None
    M = x.as_matrix()
    tol = rtol * max(1.0, float(np.max(x.values)))
    for i, j, k in itertools.combinations(range(len(leaves)), 3):
        a, b, c = sorted((M[i, j], M[i, k], M[j, k]))
        if b - a > tol:
            return False, (leaves[i], leaves[j], leaves[k])
    return True, None


def observe(xt: PathDelayVector, epsilon: float, rng) -> PathDelayVector:
    """One draw from the full channel: noise followed by projection."""
    return project_realizable(apply_positive_noise(xt, NoiseConfig(epsilon), rng=as_rng(rng)))
