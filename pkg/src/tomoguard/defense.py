"""RoTO: message-passing perturbation generator and its min-max trainer.

Delays inside this module are in normalized units (see ``harness``); the
generator adds a learned, pair-symmetric offset to the true shared-path
vector so that an untrained generator is exactly the identity.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import neuralcore as nc
from .attackers import candidate_losses, gibbs_from_losses
from .errors import (DimensionMismatch, DivergedObjective, EmptySpace, InvariantViolation,
                     LeafCountExceedsDim, NonFiniteOutput)
from .metrics import link_symmetric_difference
from .observation import project_values
from .topology import (PathDelayVector, Role, TopologySpace, TreeTopology, enumerate_topologies,
                       local_edit_neighborhood, true_vector)

log = logging.getLogger(__name__)

ROLES = ("root", "depth1", "deeper")
EDGE_DIM = 4  # normalized delay, subtree leaf count, normalized child depth, direction
ENUMERATE_UP_TO = 5
DEFAULT_SOFTPLUS_SCALE = 3.0


def _softplus(r):
    return np.logaddexp(0.0, r)


@dataclass
class GeneratorParams:
    msg_nets: list
    update_nets: list
    embeddings: dict  # role -> (hidden_dim,) vector
    readout_net: nc.DenseNet
    hidden_dim: int = 32
    softplus_scale: float = DEFAULT_SOFTPLUS_SCALE

    @property
    def L(self) -> int:
        return len(self.msg_nets)

    def __post_init__(self):
        H = self.hidden_dim
        if self.L < 1 or len(self.update_nets) != self.L:
            raise InvariantViolation("need L >= 1 message and update networks")
        for net in self.msg_nets:
            if (net.in_dim, net.out_dim) != (2 * H + EDGE_DIM, H):
                raise DimensionMismatch("message network dimensions do not match hidden_dim")
        for net in self.update_nets:
            if (net.in_dim, net.out_dim) != (2 * H, H):
                raise DimensionMismatch("update network dimensions do not match hidden_dim")
        if (self.readout_net.in_dim, self.readout_net.out_dim) != (2 * H, 1):
            raise DimensionMismatch("readout network must map 2*hidden_dim to 1")
        if set(self.embeddings) != set(ROLES):
            raise InvariantViolation(f"embedding table needs roles {ROLES}")

    def named_arrays(self) -> dict:
        out = {}
        for i, net in enumerate(self.msg_nets):
            out.update(net.named_arrays(f"msg{i}."))
        for i, net in enumerate(self.update_nets):
            out.update(net.named_arrays(f"update{i}."))
        for role in ROLES:
            out[f"embed.{role}"] = self.embeddings[role]
        out.update(self.readout_net.named_arrays("readout."))
        return out

    def to_vector(self) -> nc.ParamVector:
        return nc.ParamVector.from_arrays(self.named_arrays())

    def from_vector(self, pv) -> "GeneratorParams":
        if not isinstance(pv, nc.ParamVector):
            pv = self.to_vector().with_values(pv)
        # views are safe: ParamVector values are never mutated in place
        arrays = pv.to_arrays(copy=False)
        return GeneratorParams(
            [net.load_arrays(arrays, f"msg{i}.") for i, net in enumerate(self.msg_nets)],
            [net.load_arrays(arrays, f"update{i}.") for i, net in enumerate(self.update_nets)],
            {role: arrays[f"embed.{role}"] for role in ROLES},
            self.readout_net.load_arrays(arrays, "readout."),
            self.hidden_dim,
            self.softplus_scale,
        )


def init_generator(rng_seed=None, L: int = 3, hidden_dim: int = 32,
                   softplus_scale: float = DEFAULT_SOFTPLUS_SCALE) -> GeneratorParams:
    """Fresh generator whose readout ends in a zero layer (identity at start)."""
    ss = np.random.SeedSequence(rng_seed)
    seeds = ss.spawn(2 * L + 2)
    H = hidden_dim
    msg = [nc.init_params([2 * H + EDGE_DIM, H], seeds[i], ["relu"]) for i in range(L)]
    upd = [nc.init_params([2 * H, H], seeds[L + i], ["relu"]) for i in range(L)]
    rng = np.random.default_rng(seeds[2 * L])
    a = math.sqrt(3.0 / H)
    emb = {role: rng.uniform(-a, a, size=H) for role in ROLES}
    readout = nc.init_params([2 * H, 32, 1], seeds[2 * L + 1])
    readout.layers[-1].weight[:] = 0.0
    return GeneratorParams(msg, upd, emb, readout, H, softplus_scale)


# -- features -------------------------------------------------------------------

@dataclass
class TreeFeatures:
    order: tuple  # nodes in preorder
    index: dict
    node: np.ndarray  # (n, H) initial states
    edge: dict  # child -> (3,) features of the link into child
    leaf_rows: np.ndarray  # row of each leaf, in T.leaves order
    up_levels: list  # per height: (child rows, parent rows, parent of each child, mean matrix, edge features)
    down_levels: list  # per hop depth: (node rows, parent rows, edge features)
    role_rows: dict  # role -> rows of internal nodes with that role


def node_features(T: TreeTopology, theta: GeneratorParams | None = None,
                  hidden_dim: int | None = None) -> TreeFeatures:
    """Initial node states and link features.

    Leaves get the one-hot of their leaf index; internal nodes get the
    embedding of their role (root, child of root, deeper). Without ``theta``
    internal rows are zero.
    """
    H = hidden_dim or (theta.hidden_dim if theta is not None else 32)
    leaves = T.leaves
    if len(leaves) > H:
        raise LeafCountExceedsDim(f"{len(leaves)} leaves exceed hidden dimension {H}")
    order = T.preorder
    index = {v: i for i, v in enumerate(order)}
    leaf_pos = {v: i for i, v in enumerate(leaves)}
    node = np.zeros((len(order), H))
    for v, i in index.items():
        if v in leaf_pos:
            node[i, leaf_pos[v]] = 1.0
        elif theta is not None:
            role = "root" if v == T.root else ("depth1" if T.hops[v] == 1 else "deeper")
            node[i] = theta.embeddings[role]
    max_delay = max(T.link_delay.values())
    max_depth = max(T.depth.values())
    edge = {
        c: np.array([T.link_delay[(p, c)] / max_delay, float(len(T.leafset(c))),
                     T.depth[c] / max_depth])
        for p, c in T.links
    }
    # nodes of equal height (resp. hop depth) never depend on each other within
    # a sweep, so each level is one batched network call
    height = {}
    for v in T.postorder:
        kids = T.children(v)
        height[v] = 1 + max(height[c] for c in kids) if kids else 0
    up = []
    for h in range(1, max(height.values()) + 1):
        parents = [v for v in T.postorder if height[v] == h]
        prow = [index[v] for v in parents for _ in T.children(v)]
        crow = [index[c] for v in parents for c in T.children(v)]
        feats = np.array([edge[c] for v in parents for c in T.children(v)])
        targets, inverse, counts = np.unique(prow, return_inverse=True, return_counts=True)
        mean = np.zeros((len(targets), len(crow)))
        mean[inverse, np.arange(len(crow))] = 1.0 / counts[inverse]
        up.append((np.array(crow), targets, targets[inverse], mean, feats))
    down = []
    for d in range(1, max(T.hops.values()) + 1):
        nodes = [v for v in order if T.hops[v] == d]
        down.append((np.array([index[v] for v in nodes]), np.array([index[T.parent[v]] for v in nodes]),
                     np.array([edge[v] for v in nodes])))
    leaf_rows = np.array([index[v] for v in leaves])
    role_rows = {r: [] for r in ROLES}
    for v in order:
        if v not in leaf_pos:
            role_rows["root" if v == T.root else ("depth1" if T.hops[v] == 1 else "deeper")].append(index[v])
    role_rows = {r: np.array(rows, dtype=int) for r, rows in role_rows.items()}
    return TreeFeatures(order, index, node, edge, leaf_rows, up, down, role_rows)


def _messages(net, h_from, h_to, e, direction):
    flag = np.full((len(e), 1), direction)
    return nc.forward(net, np.concatenate([h_from, h_to, e, flag], axis=1))


def node_embeddings(theta: GeneratorParams, T: TreeTopology, features: TreeFeatures | None = None) -> np.ndarray:
    """Final leaf states ``h^(L)`` in ``T.leaves`` order.

    Each layer runs a child-to-parent sweep with mean aggregation, then a
    parent-to-child sweep.
    """
    f = features if features is not None else node_features(T, theta)
    h = f.node.copy()
    for l in range(theta.L):
        msg, upd = theta.msg_nets[l], theta.update_nets[l]
        for crow, targets, prow, mean, feats in f.up_levels:
            agg = mean @ _messages(msg, h[crow], h[prow], feats, 1.0)
            h[targets] = nc.forward(upd, np.concatenate([h[targets], agg], axis=1))
        for rows, prows, feats in f.down_levels:
            m = _messages(msg, h[prows], h[rows], feats, -1.0)
            h[rows] = nc.forward(upd, np.concatenate([h[rows], m], axis=1))
    return h[f.leaf_rows]


def pair_offsets(theta: GeneratorParams, T: TreeTopology) -> np.ndarray:
    """Readout ``r_ij`` for every leaf pair, in ``T.pairs`` order."""
    hl = node_embeddings(theta, T)
    i, j = np.triu_indices(len(hl), 1)
    z = np.concatenate([hl[i] + hl[j], hl[i] * hl[j]], axis=1)
    return nc.forward(theta.readout_net, z)[:, 0]


def _batch_weights(theta: GeneratorParams, rows: np.ndarray) -> dict:
    """Per-name arrays with a leading batch axis, read from parameter rows."""
    out = {}
    for name, shape, off in theta.to_vector().index:
        n = int(np.prod(shape))
        out[name] = rows[:, off: off + n].reshape(len(rows), *shape)
    return out


def _net_weights(net: nc.DenseNet, arrays: dict, prefix: str) -> list:
    return [(arrays[f"{prefix}{i}.weight"], arrays[f"{prefix}{i}.bias"]) for i in range(len(net.layers))]


def perturb_batch(theta: GeneratorParams, T: TreeTopology, rows) -> np.ndarray:
    """``perturb`` for many flat parameter vectors at once; returns ``(B, k)`` values.

    ``theta`` only supplies the architecture and the index map.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    B = len(rows)
    arrays = _batch_weights(theta, rows)
    f = node_features(T, hidden_dim=theta.hidden_dim)
    h = np.repeat(f.node[None], B, axis=0)
    for role, rr in f.role_rows.items():
        if len(rr):
            h[:, rr, :] = arrays[f"embed.{role}"][:, None, :]

    def msgs(net_w, net, h_from, h_to, e, direction):
        ee = np.broadcast_to(e, (B, *e.shape))
        flag = np.full((B, len(e), 1), direction)
        return nc.forward_batch(net, net_w, np.concatenate([h_from, h_to, ee, flag], axis=2))

    for l in range(theta.L):
        msg, upd = theta.msg_nets[l], theta.update_nets[l]
        mw, uw = _net_weights(msg, arrays, f"msg{l}."), _net_weights(upd, arrays, f"update{l}.")
        for crow, targets, prow, mean, feats in f.up_levels:
            agg = mean @ msgs(mw, msg, h[:, crow], h[:, prow], feats, 1.0)
            h[:, targets] = nc.forward_batch(upd, uw, np.concatenate([h[:, targets], agg], axis=2))
        for rr, prows, feats in f.down_levels:
            m = msgs(mw, msg, h[:, prows], h[:, rr], feats, -1.0)
            h[:, rr] = nc.forward_batch(upd, uw, np.concatenate([h[:, rr], m], axis=2))
    hl = h[:, f.leaf_rows]
    i, j = np.triu_indices(hl.shape[1], 1)
    z = np.concatenate([hl[:, i] + hl[:, j], hl[:, i] * hl[:, j]], axis=2)
    r = nc.forward_batch(theta.readout_net, _net_weights(theta.readout_net, arrays, "readout."), z)[:, :, 0]
    x = true_vector(T).values
    out = np.maximum(0.0, x + theta.softplus_scale * (_softplus(r) - _softplus(0.0)))
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput("generator produced a non-finite delay")
    return out


def perturb(theta: GeneratorParams, T: TreeTopology) -> PathDelayVector:
    """``X~ = max(0, X + s * (softplus(r) - softplus(0)))`` per leaf pair."""
    x = true_vector(T)
    r = pair_offsets(theta, T)
    out = np.maximum(0.0, x.values + theta.softplus_scale * (_softplus(r) - _softplus(0.0)))
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput("generator produced a non-finite delay")
    return x.with_values(out, Role.PERTURBED)


# -- objective pieces ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    beta_min: float = 0.1
    beta_max: float = 2.0
    beta_grid_size: int = 8
    lambda_reg: float = 0.1
    epsilon: float = 0.1
    max_iters: int = 150
    mc_samples: int = 8
    candidate_limit: int = 50
    learning_rate: float = 0.01
    spsa_step: float = 0.01
    spsa_probes: int = 64
    gradient: str = "split"  # "split" (see train), or "spsa" on the whole objective
    output_step: float = 0.02
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.beta_min <= self.beta_max:
            raise InvariantViolation("need 0 < beta_min <= beta_max")
        if self.beta_grid_size < 1 or self.mc_samples < 1 or self.candidate_limit < 1:
            raise InvariantViolation("grid size, mc_samples and candidate_limit must be >= 1")
        if self.lambda_reg < 0 or self.epsilon < 0 or self.max_iters < 0:
            raise InvariantViolation("lambda_reg, epsilon and max_iters must be >= 0")
        if not (self.learning_rate > 0 and self.spsa_step > 0 and self.spsa_probes >= 1):
            raise InvariantViolation("optimizer settings must be positive")
        if self.gradient not in ("split", "spsa") or not self.output_step > 0:
            raise InvariantViolation("gradient must be 'split' or 'spsa' with output_step > 0")

    @property
    def beta_grid(self) -> np.ndarray:
        if self.beta_grid_size == 1:
            return np.array([self.beta_min])
        return np.linspace(self.beta_min, self.beta_max, self.beta_grid_size)


def training_space(T: TreeTopology, cfg: TrainConfig) -> TopologySpace:
    """Full enumeration for small leaf sets, else a local-edit neighbourhood of ``T``."""
    if T.leaf_count <= ENUMERATE_UP_TO:
        return enumerate_topologies(T.leaves)
    return local_edit_neighborhood(T, cfg.candidate_limit, cfg.rng_seed)


def regularization(xt: PathDelayVector, x: PathDelayVector) -> float:
    """Squared Euclidean distance between the perturbed and true vectors."""
    if xt.pair_index != x.pair_index or xt.values.shape != x.values.shape:
        raise DimensionMismatch("vectors are indexed by different leaf pairs")
    d = xt.values - x.values
    return float(d @ d)


def distances_to(T: TreeTopology, space: TopologySpace) -> np.ndarray:
    return np.array([link_symmetric_difference(T, t) for t in space], dtype=float)


def _noise_draws(k: int, cfg: TrainConfig, seed) -> np.ndarray:
    """Standard-normal draws shared by every evaluation in one iteration."""
    return np.random.default_rng(seed).standard_normal((cfg.mc_samples, k))


def expected_divergence_grid(xt: PathDelayVector, space: TopologySpace, dist: np.ndarray,
                             betas, epsilon: float, z: np.ndarray) -> np.ndarray:
    """``E[d]`` for every beta, from one set of noise draws ``z``."""
    n = len(xt.leaves)
    out = np.zeros(len(betas))
    for zs in z:
        raw = xt.values + np.maximum(epsilon * zs, 0.0)
        obs = xt.with_values(project_values(raw, n) if n >= 3 else raw, Role.OBSERVED)
        losses = candidate_losses(obs, space)
        for b, beta in enumerate(betas):
            out[b] += gibbs_from_losses(space, losses, beta).expectation(dist)
    return out / len(z)


def _check_space(T: TreeTopology, space: TopologySpace):
    if len(space) == 0:
        raise EmptySpace("candidate space is empty")
    if T.canonical not in space:
        raise InvariantViolation("the true topology must belong to the candidate space")


def structural_loss(theta: GeneratorParams, beta: float, T: TreeTopology, space: TopologySpace,
                    cfg: TrainConfig, noise_seed=None) -> float:
    """Monte Carlo estimate of ``-E[d(T, A')]`` under the observation channel."""
    _check_space(T, space)
    z = _noise_draws(len(T.pairs), cfg, cfg.rng_seed if noise_seed is None else noise_seed)
    xt = perturb(theta, T)
    return -float(expected_divergence_grid(xt, space, distances_to(T, space), [beta], cfg.epsilon, z)[0])


def _argmax_smallest(values: np.ndarray) -> int:
    return int(np.flatnonzero(values == values.max())[0])


def select_worst_beta(theta: GeneratorParams, T: TreeTopology, space: TopologySpace,
                      cfg: TrainConfig, noise_seed=None) -> float:
    """Grid point maximizing the structural loss (the attacker's best response)."""
    _check_space(T, space)
    grid = cfg.beta_grid
    z = _noise_draws(len(T.pairs), cfg, cfg.rng_seed if noise_seed is None else noise_seed)
    ed = expected_divergence_grid(perturb(theta, T), space, distances_to(T, space), grid, cfg.epsilon, z)
    return float(grid[_argmax_smallest(-ed)])


# -- training ----------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRow:
    iter: int
    beta_star: float
    objective: float
    reg: float


@dataclass
class TrainingTrace:
    rows: list = field(default_factory=list)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "beta_star", "objective", "reg"])
            for r in self.rows:
                w.writerow([r.iter, repr(r.beta_star), repr(r.objective), repr(r.reg)])

    def smoothed_is_nonincreasing(self, window: int = 10, start: int = 10, rtol: float = 0.05) -> bool:
        """Moving-average objective never rises by more than ``rtol`` of its scale."""
        obj = self.objectives()
        if len(obj) < window + 1:
            return True
        sm = np.convolve(obj, np.ones(window) / window, mode="valid")
        sm = sm[max(0, start - window + 1):]
        scale = max(1e-12, float(np.max(np.abs(obj))))
        running_min = np.minimum.accumulate(sm)
        return bool(np.all(sm - running_min <= rtol * scale))


def _iteration_seeds(cfg: TrainConfig, it: int):
    noise, probe = np.random.SeedSequence([cfg.rng_seed, it]).spawn(2)
    return noise, probe


def train(T: TreeTopology, space: TopologySpace | None, cfg: TrainConfig,
          theta: GeneratorParams | None = None):
    """Alternate worst-case beta selection and one Adam step on SPSA gradients.

    With ``gradient="split"`` the objective's gradient with respect to the
    k published delays is taken first by central differences, then pushed
    back to the parameters by SPSA on the cheap linear surrogate
    ``theta -> g . X~(theta)``. SPSA on the full objective (``"spsa"``)
    barely moves the parameters at this scale since only the final readout
    layer has signal at initialization.

    Returns ``(theta, trace)``. All randomness comes from ``cfg.rng_seed``;
    within an iteration every objective evaluation reuses the same noise
    draws (common random numbers).
    """
    space = space if space is not None else training_space(T, cfg)
    _check_space(T, space)
    theta = theta if theta is not None else init_generator(cfg.rng_seed)
    trace = TrainingTrace()
    if cfg.max_iters == 0:
        return theta, trace
    x = true_vector(T)
    dist = distances_to(T, space)
    grid = cfg.beta_grid
    pv = theta.to_vector()
    vec = pv.values.copy()
    opt = nc.Adam(vec.size, lr=cfg.learning_rate)
    k = len(T.pairs)

    for it in range(cfg.max_iters):
        noise_seed, probe_seed = _iteration_seeds(cfg, it)
        z = _noise_draws(k, cfg, noise_seed)
        cur = theta.from_vector(pv.with_values(vec))
        xt = perturb(cur, T)
        ed = expected_divergence_grid(xt, space, dist, grid, cfg.epsilon, z)
        b = _argmax_smallest(-ed)
        beta = float(grid[b])
        reg = regularization(xt, x)
        objective = -float(ed[b]) + cfg.lambda_reg * reg
        if not math.isfinite(objective):
            raise DivergedObjective(f"objective became {objective} at iteration {it}")
        trace.rows.append(TraceRow(it, beta, objective, reg))

        probe_rng = np.random.default_rng(probe_seed)
        if cfg.gradient == "split":
            def g_out(values, beta=beta, z=z):
                xt_v = xt.with_values(np.maximum(values, 0.0), Role.PERTURBED)
                e = expected_divergence_grid(xt_v, space, dist, [beta], cfg.epsilon, z)[0]
                return -float(e) + cfg.lambda_reg * regularization(xt_v, x)

            gx = nc.numeric_gradient(g_out, xt.values, h=cfg.output_step)

            def f(v, gx=gx):
                return float(gx @ perturb_batch(theta, T, v)[0])

            def batch_f(rows, gx=gx):
                return perturb_batch(theta, T, rows) @ gx
        else:
            batch_f = None

            def f(v, beta=beta, z=z):
                xt_v = perturb(theta.from_vector(pv.with_values(v)), T)
                e = expected_divergence_grid(xt_v, space, dist, [beta], cfg.epsilon, z)[0]
                return -float(e) + cfg.lambda_reg * regularization(xt_v, x)

        grad = nc.numeric_gradient(f, vec, h=cfg.spsa_step, method="spsa",
                                   rng=probe_rng, probes=cfg.spsa_probes, batch_f=batch_f)
        if not np.all(np.isfinite(grad)):
            raise DivergedObjective(f"non-finite gradient at iteration {it}")
        vec = opt.step(vec, grad)

    if not trace.smoothed_is_nonincreasing():
        log.warning("smoothed training objective rose by more than 5% after iteration 10")
    return theta.from_vector(pv.with_values(vec)), trace


def save_generator(path, theta: GeneratorParams, meta: dict | None = None) -> None:
    info = {"L": theta.L, "hidden_dim": theta.hidden_dim, "softplus_scale": theta.softplus_scale}
    info.update(meta or {})
    nc.save_checkpoint(path, theta.to_vector(), info)


def load_generator(path) -> tuple:
    pv, meta = nc.load_checkpoint(path)
    template = init_generator(0, int(meta["L"]), int(meta["hidden_dim"]), float(meta["softplus_scale"]))
    return template.from_vector(pv), meta
