"""Reference defenses: Proto (random fake tree) and AntiTomo (closest fake tree)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .attackers import NNLS_MAX_ITER, NNLS_TOL
from .errors import InvariantViolation, NoCandidate
from .topology import (DEFAULT_DELAY_RANGE_MS, PathDelayVector, Role, TreeTopology, as_rng,
                       random_tree, true_vector)

MAX_RETRIES = 10


@dataclass(frozen=True)
class BaselineConfig:
    candidate_count: int = 64
    rng_seed: int | None = None
    max_fanout: int = 3
    delay_low: float = DEFAULT_DELAY_RANGE_MS[0]
    delay_high: float = DEFAULT_DELAY_RANGE_MS[1]

    def __post_init__(self):
        if self.candidate_count < 1:
            raise InvariantViolation("candidate_count must be >= 1")
        if not 0 < self.delay_low <= self.delay_high:
            raise InvariantViolation("need 0 < delay_low <= delay_high")


@dataclass(frozen=True)
class BaselineResult:
    vector: PathDelayVector  # role PERTURBED
    fake: TreeTopology
    cost: float  # squared distance to the true vector


def _draw_fake(T: TreeTopology, cfg: BaselineConfig, rng) -> TreeTopology:
    return random_tree(T.leaf_count, rng, cfg.max_fanout, leaf_labels=T.leaves,
                       delay_range=(cfg.delay_low, cfg.delay_high))


def proto_defense(T: TreeTopology, cfg: BaselineConfig) -> BaselineResult:
    """Publish the shared-path vector of one random fake tree over the same leaves."""
    rng = as_rng(cfg.rng_seed)
    fake = _draw_fake(T, cfg, rng)
    x = true_vector(T)
    xt = x.with_values(true_vector(fake).values, Role.PERTURBED)
    d = xt.values - x.values
    return BaselineResult(xt, fake, float(d @ d))


def fit_fake(T: TreeTopology, fake: TreeTopology, lower: float):
    """Fake-tree delays closest to the true vector, internal links at least ``lower``.

    Returns ``(fitted_fake, vector, cost)``. Pendant links keep their sampled
    delays since they never enter a shared path.
    """
    x = true_vector(T)
    A = fake.informative_design
    mu, cost = kernels.nnls_fit(A, x.values, lower, NNLS_MAX_ITER, NNLS_TOL)
    shared = [(p, c) for p, c in fake.links if len(fake.leafset(c)) >= 2]
    fitted = fake.with_delays({e: float(m) for e, m in zip(shared, mu)})
    values = A @ mu if A.shape[1] else np.zeros(len(x.values))
    return fitted, x.with_values(values, Role.PERTURBED), float(cost)


def antitomo_defense(T: TreeTopology, cfg: BaselineConfig) -> BaselineResult:
    """Among ``candidate_count`` random fake trees, publish the one closest to the truth.

    Candidates come from the same seeded stream as :func:`proto_defense`,
    so the first candidate is Proto's fake tree. Draws equal to the truth
    are skipped; if a whole round yields nothing usable it is retried up to
    ten times.
    """
    rng = as_rng(cfg.rng_seed)
    best = None
    for _ in range(MAX_RETRIES):
        for _ in range(cfg.candidate_count):
            fake = _draw_fake(T, cfg, rng)
            if fake.canonical == T.canonical:
                continue
            fitted, xt, cost = fit_fake(T, fake, cfg.delay_low)
            if best is None or cost < best.cost:
                best = BaselineResult(xt, fitted, cost)
        if best is not None:
            return best
    raise NoCandidate("every sampled fake topology equals the true topology")
