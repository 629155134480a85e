"""Experiment runner: defenses x attackers x noise levels x trials.

Topology files and published vectors are in milliseconds. Internally every
delay is divided by ``delay_unit_ms`` so that links sit near unit scale,
which is where the generator's softplus offsets and the attacker
temperature grid are meaningful.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .attackers import (MleConfig, RnjConfig, candidate_space, gibbs_posterior, mle_infer,
                        rnj_infer)
from .baselines import BaselineConfig, antitomo_defense, proto_defense
from .config import ATTACKERS, DEFENSES, ExperimentConfig, derive_seed
from .defense import (GeneratorParams, TrainConfig, init_generator, perturb, save_generator, train,
                      training_space)
from .metrics import compare
from .observation import observe
from .topology import (DEFAULT_DELAY_RANGE_MS, PathDelayVector, Role, TreeTopology, random_tree,
                       read_topology, true_vector)

log = logging.getLogger(__name__)

CSV_HEADER = ("defense", "attack", "epsilon", "ted_sim", "struct_sim", "link_dist", "seed")
SIGMA2_FLOOR = 1e-4

# fixed integer keys for seed derivation; stable across config orderings
_TOPOLOGY, _TRAIN, _NOISE, _DEFENSE, _ATTACK, _BOUND = 1, 2, 3, 4, 5, 6
_DEFENSE_CODE = {d: i for i, d in enumerate(DEFENSES)}
_ATTACK_CODE = {a: i for i, a in enumerate(ATTACKERS)}


def _eps_key(eps: float) -> int:
    return int(round(eps * 1_000_000))


@dataclass(frozen=True)
class ResultRow:
    defense: str
    attack: str
    epsilon: float
    ted_similarity: float
    struct_similarity: float
    link_distance: float
    seed: int

    def csv_fields(self) -> list:
        return [self.defense, self.attack, repr(self.epsilon), repr(self.ted_similarity),
                repr(self.struct_similarity), repr(self.link_distance), str(self.seed)]


def load_truth(cfg: ExperimentConfig) -> TreeTopology:
    """True topology in milliseconds, from file or generated from the seed."""
    src = cfg.topology
    if src.file is not None:
        return read_topology(src.file)
    return random_tree(src.leaf_count, derive_seed(cfg.seed, _TOPOLOGY), src.max_fanout,
                       delay_range=DEFAULT_DELAY_RANGE_MS)


def to_units(T: TreeTopology, cfg: ExperimentConfig) -> TreeTopology:
    return T.scaled(1.0 / cfg.delay_unit_ms)


def publish_ms(xt: PathDelayVector, cfg: ExperimentConfig) -> np.ndarray:
    """Published delays as whole milliseconds."""
    return np.rint(xt.values * cfg.delay_unit_ms)


def published_vector(xt: PathDelayVector, cfg: ExperimentConfig) -> PathDelayVector:
    # the network only carries integer milliseconds, so the channel sees the rounded vector
    return xt.with_values(publish_ms(xt, cfg) / cfg.delay_unit_ms, Role.PERTURBED)


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return replace(cfg.train, rng_seed=derive_seed(cfg.seed, _TRAIN) % (2 ** 63))


def initial_generator(cfg: ExperimentConfig) -> GeneratorParams:
    """The untrained generator that ``train_generator`` starts from."""
    g = cfg.generator
    return init_generator(train_config(cfg).rng_seed, g.layers, g.hidden_dim, g.softplus_scale)


def train_generator(T_units: TreeTopology, cfg: ExperimentConfig):
    """Train RoTO on the unit-scaled truth; returns ``(theta, trace)``."""
    tcfg = train_config(cfg)
    return train(T_units, training_space(T_units, tcfg), tcfg, initial_generator(cfg))


def _baseline_cfg(cfg: ExperimentConfig, seed: int) -> BaselineConfig:
    lo, hi = DEFAULT_DELAY_RANGE_MS
    return BaselineConfig(cfg.baseline.candidate_count, seed, cfg.topology.max_fanout,
                          lo / cfg.delay_unit_ms, hi / cfg.delay_unit_ms)


def defend(name: str, T_units: TreeTopology, cfg: ExperimentConfig, theta: GeneratorParams | None,
           trial: int) -> PathDelayVector:
    """Perturbed vector (normalized units, before rounding) for one trial."""
    if name == "none":
        x = true_vector(T_units)
        return x.with_values(x.values, Role.PERTURBED)
    if name == "roto":
        return perturb(theta, T_units)
    seed = derive_seed(cfg.seed, _DEFENSE, trial)
    if name == "proto":
        return proto_defense(T_units, _baseline_cfg(cfg, seed)).vector
    if name == "antitomo":
        return antitomo_defense(T_units, _baseline_cfg(cfg, seed)).vector
    raise ValueError(name)


def attack(name: str, x_star: PathDelayVector, cfg: ExperimentConfig, epsilon: float,
           seed: int) -> TreeTopology:
    delta = cfg.rnj_delta_ms / cfg.delay_unit_ms
    if name == "rnj":
        return rnj_infer(x_star, RnjConfig(delta=delta, allow_unary_root=False))
    if name == "gibbs":
        rng = np.random.default_rng(seed)
        space = candidate_space(x_star, cfg.train.candidate_limit, rng, delta)
        grid = cfg.train.beta_grid
        beta = float(grid[rng.integers(len(grid))])
        return space[gibbs_posterior(x_star, space, beta).sample(rng)]
    if name == "mle":
        m = cfg.mle
        sigma2 = m.sigma2 if m.sigma2 is not None else max(epsilon ** 2, SIGMA2_FLOOR)
        mcfg = MleConfig(lambda_pen=m.lambda_pen, iters=m.iters, proposal_mix=tuple(m.proposal_mix),
                         sigma2=sigma2, rng_seed=seed)
        return mle_infer(x_star, cfg=mcfg).tree
    raise ValueError(name)


def run_experiment(cfg: ExperimentConfig, theta: GeneratorParams | None = None,
                   write: bool = True) -> list:
    """Run every cell and return the result rows; optionally write CSV and JSON.

    Noise draws depend only on (seed, epsilon, trial), so defenses are
    compared on paired noise.
    """
    T = load_truth(cfg)
    Tu = to_units(T, cfg)
    trace = None
    if "roto" in cfg.defenses and theta is None:
        theta, trace = train_generator(Tu, cfg)
    rows = []
    for trial in range(cfg.trials):
        published = {d: published_vector(defend(d, Tu, cfg, theta, trial), cfg) for d in cfg.defenses}
        for eps in cfg.epsilons:
            noise_seed = derive_seed(cfg.seed, _NOISE, _eps_key(eps), trial)
            for d in cfg.defenses:
                x_star = observe(published[d], eps, np.random.default_rng(noise_seed))
                for a in cfg.attackers:
                    seed = derive_seed(cfg.seed, _ATTACK, _ATTACK_CODE[a], _eps_key(eps), trial,
                                       _DEFENSE_CODE[d])
                    guess = attack(a, x_star, cfg, eps, seed)
                    rep = compare(T, guess, all_nodes_degree=cfg.all_nodes_degree)
                    rows.append(ResultRow(d, a, float(eps), rep.ted_similarity, rep.struct_similarity,
                                          rep.link_distance, seed))
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results(out / "results.csv", rows)
        (out / "summary.json").write_text(json.dumps(summarize(rows, cfg), indent=2, sort_keys=True) + "\n")
        if trace is not None:
            trace.write_csv(out / "trace.csv")
            save_generator(out / "generator.ckpt", theta, {"seed": cfg.seed})
    return rows


def write_results(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())


def summarize(rows, cfg: ExperimentConfig | None = None) -> dict:
    """Per-cell mean and std of every metric."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.defense, r.attack, r.epsilon), []).append(r)
    out = []
    for (d, a, e), rs in cells.items():
        cell = {"defense": d, "attack": a, "epsilon": e, "n": len(rs)}
        for key in ("ted_similarity", "struct_similarity", "link_distance"):
            v = np.array([getattr(r, key) for r in rs])
            cell[key] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0}
        out.append(cell)
    doc = {"cells": out}
    if cfg is not None:
        doc["seed"] = cfg.seed
        doc["trials"] = cfg.trials
    return doc


def cell_means(rows, metric: str = "link_distance") -> dict:
    acc: dict = {}
    for r in rows:
        acc.setdefault((r.defense, r.attack, r.epsilon), []).append(getattr(r, metric))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def config_echo(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    return json.loads(json.dumps(doc, default=lambda o: list(o) if isinstance(o, tuple) else str(o)))


def relative_drop(clean: float, noisy: float) -> float:
    return (clean - noisy) / clean if clean > 0 else (0.0 if noisy == clean else math.inf)
