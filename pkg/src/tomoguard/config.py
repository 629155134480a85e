"""Experiment configuration: a JSON document validated into dataclasses.

Unknown keys are rejected at every level so typos fail fast.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .defense import DEFAULT_SOFTPLUS_SCALE, TrainConfig
from .errors import ConfigInvalid, TomoguardError

DEFENSES = ("none", "roto", "proto", "antitomo")
ATTACKERS = ("gibbs", "rnj", "mle")
CHANNELS = ("identity", "constant", "none", "roto")


@dataclass(frozen=True)
class TopologySource:
    file: str | None = None
    leaf_count: int = 5
    max_fanout: int = 3


@dataclass(frozen=True)
class MleSettings:
    iters: int = 10000
    proposal_mix: tuple = (0.3, 0.3, 0.4)
    lambda_pen: float | None = None
    sigma2: float | None = None  # None: max(epsilon^2, 1e-4) in delay units


@dataclass(frozen=True)
class GeneratorSettings:
    layers: int = 3
    hidden_dim: int = 32
    softplus_scale: float = DEFAULT_SOFTPLUS_SCALE


@dataclass(frozen=True)
class BaselineSettings:
    candidate_count: int = 64


@dataclass(frozen=True)
class BoundSettings:
    channel: str = "identity"
    samples_per_topology: int = 200
    trials: int = 2000
    epsilon: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologySource = TopologySource()
    defenses: tuple = ("none",)
    attackers: tuple = ("rnj",)
    train: TrainConfig = TrainConfig()
    noise: dict = field(default_factory=lambda: {"epsilon": 0.1})
    noise_sweep: tuple = ()
    trials: int = 5
    out_dir: str = "out"
    seed: int = 0
    delay_unit_ms: float = 500.0
    rnj_delta_ms: float = 100.0
    all_nodes_degree: bool = False
    mle: MleSettings = MleSettings()
    generator: GeneratorSettings = GeneratorSettings()
    baseline: BaselineSettings = BaselineSettings()
    bound: BoundSettings = BoundSettings()

    @property
    def epsilons(self) -> tuple:
        return tuple(self.noise_sweep) if self.noise_sweep else (float(self.noise["epsilon"]),)

    def with_overrides(self, seed=None, out_dir=None) -> "ExperimentConfig":
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if out_dir is not None:
            out = replace(out, out_dir=str(out_dir))
        return out


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigInvalid(f"unknown key(s) in {where}: {sorted(unknown)}")
    kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TomoguardError as exc:
        raise ConfigInvalid(f"{where}: {exc}") from exc
    except TypeError as exc:
        raise ConfigInvalid(f"{where}: {exc}") from exc


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid("configuration must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigInvalid(f"unknown configuration key(s): {sorted(unknown)}")
    kw = {}
    nested = {"topology": TopologySource, "mle": MleSettings, "generator": GeneratorSettings,
              "baseline": BaselineSettings, "bound": BoundSettings}
    for key, cls in nested.items():
        if key in data:
            kw[key] = _build(cls, data[key], key)
    if "train" in data:
        train = dict(data["train"]) if isinstance(data["train"], dict) else data["train"]
        if isinstance(train, dict) and "rng_seed" in train:
            raise ConfigInvalid("train.rng_seed is derived from the experiment seed; do not set it")
        kw["train"] = _build(TrainConfig, train, "train")
    if "noise" in data:
        noise = data["noise"]
        if not isinstance(noise, dict) or set(noise) - {"epsilon"}:
            raise ConfigInvalid("noise must be an object with the single key 'epsilon'")
        kw["noise"] = {"epsilon": float(noise.get("epsilon", 0.1))}
    for key in ("defenses", "attackers", "noise_sweep"):
        if key in data:
            if not isinstance(data[key], list):
                raise ConfigInvalid(f"{key} must be a list")
            kw[key] = tuple(data[key])
    for key in ("trials", "seed"):
        if key in data:
            if not isinstance(data[key], int) or isinstance(data[key], bool):
                raise ConfigInvalid(f"{key} must be an integer")
            kw[key] = data[key]
    for key in ("delay_unit_ms", "rnj_delta_ms"):
        if key in data:
            kw[key] = float(data[key])
    if "out_dir" in data:
        kw["out_dir"] = str(data["out_dir"])
    if "all_nodes_degree" in data:
        kw["all_nodes_degree"] = bool(data["all_nodes_degree"])
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    bad = [d for d in cfg.defenses if d not in DEFENSES]
    if bad or not cfg.defenses:
        raise ConfigInvalid(f"defenses must be a nonempty subset of {DEFENSES}, got {list(cfg.defenses)}")
    bad = [a for a in cfg.attackers if a not in ATTACKERS]
    if bad or not cfg.attackers:
        raise ConfigInvalid(f"attackers must be a nonempty subset of {ATTACKERS}, got {list(cfg.attackers)}")
    if len(set(cfg.defenses)) != len(cfg.defenses) or len(set(cfg.attackers)) != len(cfg.attackers):
        raise ConfigInvalid("defenses and attackers must not repeat")
    if any((not isinstance(e, (int, float))) or e < 0 for e in cfg.epsilons):
        raise ConfigInvalid("noise levels must be nonnegative numbers")
    if cfg.trials < 1:
        raise ConfigInvalid("trials must be >= 1")
    if cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise ConfigInvalid("seed must be an unsigned 64-bit integer")
    if not (cfg.delay_unit_ms > 0 and cfg.rnj_delta_ms > 0):
        raise ConfigInvalid("delay_unit_ms and rnj_delta_ms must be positive")
    t = cfg.topology
    if t.file is None and (t.leaf_count < 2 or t.max_fanout < 2):
        raise ConfigInvalid("generated topologies need leaf_count >= 2 and max_fanout >= 2")
    m = cfg.mle
    if m.iters < 0 or len(m.proposal_mix) != 3 or abs(sum(m.proposal_mix) - 1) > 1e-9:
        raise ConfigInvalid("mle needs iters >= 0 and a 3-way proposal_mix summing to 1")
    g = cfg.generator
    if g.layers < 1 or g.hidden_dim < 1 or not g.softplus_scale > 0:
        raise ConfigInvalid("generator needs layers >= 1, hidden_dim >= 1, softplus_scale > 0")
    if cfg.baseline.candidate_count < 1:
        raise ConfigInvalid("baseline.candidate_count must be >= 1")
    b = cfg.bound
    if b.channel not in CHANNELS:
        raise ConfigInvalid(f"bound.channel must be one of {CHANNELS}")
    if b.samples_per_topology < 1 or b.trials < 1 or b.epsilon < 0:
        raise ConfigInvalid("bound needs positive sample counts and epsilon >= 0")


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data)


def derive_seed(root: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for the path ``root / keys``."""
    return int(np.random.SeedSequence([int(root), *[int(k) for k in keys]]).generate_state(2, np.uint64)[0])
