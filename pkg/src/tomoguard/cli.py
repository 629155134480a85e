"""Command line entry point: ``tomoguard gen|train|attack|eval|run|bound``.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .config import ATTACKERS, ExperimentConfig, TopologySource, derive_seed, load_config
from .defense import load_generator, perturb, save_generator
from .errors import (ChainDiverged, DivergedObjective, NoCandidate, NonFiniteOutput, SpaceTooLarge,
                     TomoguardError)
from .metrics import compare
from .observation import NoiseConfig, observe
from .theory import (MI_MAX_LEAVES, ChannelSpec, constant_defense, empirical_success_probability,
                     fano_bound, identity_defense, mutual_information)
from .topology import default_leaf_labels, enumerate_topologies, read_topology, write_topology

log = logging.getLogger("tomoguard")

RUNTIME_ERRORS = (DivergedObjective, ChainDiverged, NonFiniteOutput, NoCandidate)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, out_dir=args.out)


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _truth(args, cfg: ExperimentConfig):
    if getattr(args, "topology", None):
        return read_topology(args.topology)
    return harness.load_truth(cfg)


def cmd_gen(args) -> int:
    cfg = _config(args)
    src = cfg.topology
    if args.leaves is not None or args.max_fanout is not None:
        src = TopologySource(None, args.leaves or src.leaf_count, args.max_fanout or src.max_fanout)
        cfg = replace(cfg, topology=src)
    path = _out(cfg) / "topology.txt"
    write_topology(harness.load_truth(cfg), path)
    print(path)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    T = _truth(args, cfg)
    theta, trace = harness.train_generator(harness.to_units(T, cfg), cfg)
    write_topology(T, out / "topology.txt")
    save_generator(out / "generator.ckpt", theta, {"seed": cfg.seed, "delay_unit_ms": cfg.delay_unit_ms})
    trace.write_csv(out / "trace.csv")
    last = trace.rows[-1] if trace.rows else None
    if last is not None:
        print(f"trained {len(trace.rows)} iterations, final objective {last.objective:.6f}")
    print(out / "generator.ckpt")
    return 0


def _write_published(path, xt, cfg) -> None:
    ms = harness.publish_ms(xt, cfg)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "delay_ms"])
        for (i, j), v in zip(xt.pair_index, ms):
            w.writerow([i, j, int(v)])


def cmd_attack(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    T = _truth(args, cfg)
    Tu = harness.to_units(T, cfg)
    if args.checkpoint:
        theta, _ = load_generator(args.checkpoint)
        xt = perturb(theta, Tu)
    else:
        xt = harness.defend("none", Tu, cfg, None, 0)
    published = harness.published_vector(xt, cfg)
    eps = args.epsilon if args.epsilon is not None else cfg.epsilons[0]
    name = args.attacker or cfg.attackers[0]
    x_star = observe(published, eps, np.random.default_rng(derive_seed(cfg.seed, harness._NOISE, 0)))
    guess = harness.attack(name, x_star, cfg, eps, derive_seed(cfg.seed, harness._ATTACK, 0))
    _write_published(out / "published.csv", published, cfg)
    # inferred trees carry unit delays; write them back in milliseconds
    write_topology(guess.scaled(cfg.delay_unit_ms), out / "inferred.txt")
    print(out / "inferred.txt")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    rep = compare(read_topology(args.truth), read_topology(args.inferred),
                  all_nodes_degree=cfg.all_nodes_degree)
    text = json.dumps(rep.as_dict(), indent=2, sort_keys=True)
    (out / "metrics.json").write_text(text + "\n")
    print(text)
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    rows = harness.run_experiment(cfg)
    for (d, a, e), m in harness.cell_means(rows).items():
        print(f"{d:9s} {a:6s} eps={e:<6g} link_dist={m:.4f}")
    return 0


def bound_report(cfg: ExperimentConfig) -> dict:
    """Mutual information, Fano bound and empirical MAP success on an enumerable channel."""
    b = cfg.bound
    l = cfg.topology.leaf_count
    if l > MI_MAX_LEAVES:
        raise SpaceTooLarge(f"bound needs an enumerable space (at most {MI_MAX_LEAVES} leaves)")
    space = enumerate_topologies(default_leaf_labels(l))
    if b.channel in ("identity", "none"):
        defense = identity_defense
    elif b.channel == "constant":
        defense = constant_defense(0.0)
    else:
        src = replace(cfg.topology, file=None)
        T = harness.load_truth(replace(cfg, topology=src))
        theta, _ = harness.train_generator(harness.to_units(T, cfg), cfg)

        def defense(member, theta=theta):
            return perturb(theta, member)
    ch = ChannelSpec(space, defense, NoiseConfig(b.epsilon))
    mi, se = mutual_information(ch, b.samples_per_topology, derive_seed(cfg.seed, harness._BOUND, 0))
    bound = fano_bound(mi + 2 * se, len(space))
    p, (lo, hi) = empirical_success_probability(ch, trials=b.trials, rng_seed=derive_seed(cfg.seed, harness._BOUND, 1))
    return {"channel": b.channel, "leaf_count": l, "epsilon": b.epsilon, "space_size": len(space),
            "mutual_information": mi, "stderr": se, "fano_bound": bound, "p_success": p,
            "ci_low": lo, "ci_high": hi, "pass": bool(p <= bound)}


def cmd_bound(args) -> int:
    cfg = _config(args)
    rep = bound_report(cfg)
    (_out(cfg) / "bound.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    print(f"I = {rep['mutual_information']:.4f} +/- {rep['stderr']:.4f} bits")
    print(f"Fano bound = {rep['fano_bound']:.4f}")
    print(f"P_succ = {rep['p_success']:.4f} [{rep['ci_low']:.4f}, {rep['ci_high']:.4f}]")
    print("PASS" if rep["pass"] else "FAIL")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad arguments are validation errors (exit 1), not runtime errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tomoguard", description="Topology obfuscation workbench")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        return p

    p = common(sub.add_parser("gen", help="generate a random topology file"))
    p.add_argument("--leaves", type=int)
    p.add_argument("--max-fanout", type=int)
    p.set_defaults(func=cmd_gen)

    p = common(sub.add_parser("train", help="train the perturbation generator"))
    p.add_argument("--topology", help="topology file (default: from the config)")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("attack", help="publish a vector and run one attacker on it"))
    p.add_argument("--topology", help="topology file (default: from the config)")
    p.add_argument("--checkpoint", help="generator checkpoint; omit for no defense")
    p.add_argument("--attacker", choices=ATTACKERS)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_attack)

    p = common(sub.add_parser("eval", help="compare two topology files"))
    p.add_argument("--truth", required=True)
    p.add_argument("--inferred", required=True)
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("run", help="run the full experiment grid"))
    p.set_defaults(func=cmd_run)

    p = common(sub.add_parser("bound", help="check the Fano bound on an enumerable channel"))
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TomoguardError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("unexpected failure")
        return 2


if __name__ == "__main__":
    sys.exit(main())
