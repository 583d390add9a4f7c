"""Type-aware graph decoder: per-type MLP transforms, inner-product edge
scoring over schema-valid pairs only, and the focal reconstruction loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .graph import enumerate_legal_pairs

PROB_CLAMP = 1e-12


@dataclass
class FocalConfig:
    """Focusing exponent and positive/negative class weights."""

    gamma: float = 2.0
    tau_plus: float = 0.75
    tau_minus: float = 0.25

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.tau_plus <= 0.0 or self.tau_minus <= 0.0:
            raise ConfigError("class weights must be > 0")


class DecoderParameters:
    """One single-layer relu MLP (d x d) per node type in a legal triple."""

    def __init__(self, schema, dim, rng=None, type_aware=True):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.type_aware = type_aware
        decoded_types = []
        for tu, tv in schema.triples.values():
            for t in (tu, tv):
                if t not in decoded_types:
                    decoded_types.append(t)
        self.mlp_w = {}
        self.mlp_b = {}
        if type_aware:
            for t in decoded_types:
                self.mlp_w[t] = T.glorot_uniform(rng, (dim, dim), dim, dim)
                self.mlp_b[t] = T.zeros((dim,))
        else:
            # uniform-MLP toggle: one shared transform regardless of type
            shared_w = T.glorot_uniform(rng, (dim, dim), dim, dim)
            shared_b = T.zeros((dim,))
            for t in decoded_types:
                self.mlp_w[t] = shared_w
                self.mlp_b[t] = shared_b

    def named(self, prefix="dec"):
        out = {}
        for t, w in self.mlp_w.items():
            out[f"{prefix}.mlp_w.{t}"] = w
            out[f"{prefix}.mlp_b.{t}"] = self.mlp_b[t]
            if not self.type_aware:
                break
        return out


@dataclass
class EdgePredictionEntry:
    edge_type: str
    type_u: str
    type_v: str
    probs: object          # Tensor (n_u, n_v), sigmoid of inner products
    truth: np.ndarray      # (n_u, n_v) ground-truth 0/1


@dataclass
class EdgePredictionSet:
    """Predicted probability and ground truth for every legal candidate pair."""

    entries: list = field(default_factory=list)
    graph: object = None

    @property
    def total_candidates(self):
        total = 0
        for e in self.entries:
            n_u, n_v = e.truth.shape
            total += n_u * (n_u - 1) // 2 if e.type_u == e.type_v else n_u * n_v
        return total


def type_transform(z, graph, params):
    """Z': per node type, relu(W_t z + b_t); distinct MLPs per type."""
    blocks = []
    for t in graph.schema.node_types:
        lo, hi = graph.type_range(t)
        rows = T.slice_rows(z, lo, hi)
        if t in params.mlp_w:
            rows = T.relu(T.add(T.matmul(rows, params.mlp_w[t]), params.mlp_b[t]))
        blocks.append(rows)
    return T.concat(blocks, axis=0)


def edge_probability(zu, zv):
    """sigmoid of the inner product of two embedding vectors."""
    zu = np.asarray(zu, dtype=np.float64)
    zv = np.asarray(zv, dtype=np.float64)
    if zu.shape != zv.shape:
        raise ConfigError(f"embedding dimension mismatch: {zu.shape} vs {zv.shape}")
    x = float(zu @ zv)
    return 1.0 / (1.0 + np.exp(-x)) if x >= 0 else float(np.exp(x) / (1.0 + np.exp(x)))


def focal_loss(a, p, cfg):
    """-tau_a (1 - p_t)^gamma log(p_t) for a single pair (scalar form)."""
    p = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
    p_t = p if a == 1 else 1.0 - p
    tau = cfg.tau_plus if a == 1 else cfg.tau_minus
    return -tau * (1.0 - p_t) ** cfg.gamma * np.log(p_t)


def score_pairs(z_prime, graph, pairs=None):
    """Predicted probability matrix per legal triple from transformed embeddings."""
    if pairs is None:
        pairs = enumerate_legal_pairs(graph)
    entries = []
    for entry in pairs.entries:
        lo_u, hi_u = graph.type_range(entry.type_u)
        lo_v, hi_v = graph.type_range(entry.type_v)
        zu = T.slice_rows(z_prime, lo_u, hi_u)
        zv = T.slice_rows(z_prime, lo_v, hi_v)
        probs = T.sigmoid(T.matmul(zu, T.transpose(zv)))
        entries.append(EdgePredictionEntry(entry.edge_type, entry.type_u,
                                           entry.type_v, probs, entry.adjacency))
    return EdgePredictionSet(entries, graph=graph)


def _focal_matrix(probs, truth, cfg):
    """Elementwise focal terms as a Tensor, probabilities clamped for log safety."""
    p = T.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    a = T.Tensor(truth)
    one = T.Tensor(np.ones_like(truth))
    p_t = T.add(T.mul(a, p), T.mul(T.sub(one, a), T.sub(one, p)))
    tau = cfg.tau_plus * truth + cfg.tau_minus * (1.0 - truth)
    weight = T.mul(T.Tensor(tau), T.power(T.sub(one, p_t), cfg.gamma))
    return T.neg(T.mul(weight, T.log(p_t)))


def reconstruction_loss(preds, cfg, negative_ratio=None, rng=None):
    """Mean focal loss over every legal candidate pair.

    With `negative_ratio` set, all positives plus `negative_ratio` uniform
    negatives per positive are scored instead, negatives reweighted so the
    expected value equals the full-enumeration mean.
    """
    if not preds.entries or preds.total_candidates == 0:
        raise ConfigError("empty candidate set")
    if negative_ratio is None:
        total = None
        count = 0
        for e in preds.entries:
            terms = _focal_matrix(e.probs, e.truth, cfg)
            if e.type_u == e.type_v:
                mask = np.triu(np.ones_like(e.truth), 1)
                terms = T.mul(terms, T.Tensor(mask))
                count += int(mask.sum())
            else:
                count += e.truth.size
            s = T.tsum(terms)
            total = s if total is None else T.add(total, s)
        return T.scale(total, 1.0 / count)
    return _subsampled_loss(preds, cfg, negative_ratio, rng)


def _subsampled_loss(preds, cfg, ratio, rng):
    total = None
    count = preds.total_candidates
    for e in preds.entries:
        flat_truth = e.truth.reshape(-1)
        if e.type_u == e.type_v:
            valid = np.triu(np.ones_like(e.truth), 1).reshape(-1).astype(bool)
        else:
            valid = np.ones_like(flat_truth, dtype=bool)
        pos = np.flatnonzero((flat_truth == 1.0) & valid)
        neg = np.flatnonzero((flat_truth == 0.0) & valid)
        n_sample = min(len(neg), int(ratio) * max(len(pos), 1))
        chosen_neg = rng.choice(neg, size=n_sample, replace=False) if n_sample else neg[:0]
        idx = np.concatenate([pos, chosen_neg])
        if idx.size == 0:
            continue
        flat = T.reshape(e.probs, (-1, 1))
        picked = T.gather_rows(flat, idx)
        truth = flat_truth[idx].reshape(-1, 1)
        terms = _focal_matrix(picked, truth, cfg)
        weights = np.ones_like(truth)
        if n_sample:
            weights[len(pos):] = len(neg) / n_sample
        s = T.tsum(T.mul(terms, T.Tensor(weights)))
        total = s if total is None else T.add(total, s)
    if total is None:
        raise ConfigError("empty candidate set")
    return T.scale(total, 1.0 / count)


def dump_predictions(preds, path):
    """TSV dump `<edge_type> <u> <v> <a> <p>` sorted by (edge_type, p desc)."""
    graph = preds.graph
    with open(path, "w", encoding="utf-8") as fh:
        for e in preds.entries:
            lo_u, _ = graph.type_range(e.type_u)
            lo_v, _ = graph.type_range(e.type_v)
            p = e.probs.values if isinstance(e.probs, T.Tensor) else e.probs
            rows = []
            n_u, n_v = e.truth.shape
            for i in range(n_u):
                for j in range(n_v):
                    if e.type_u == e.type_v and j <= i:
                        continue
                    rows.append((float(p[i, j]), graph.node_name(lo_u + i),
                                 graph.node_name(lo_v + j), int(e.truth[i, j])))
            rows.sort(key=lambda r: (-r[0], r[1], r[2]))
            for prob, u, v, a in rows:
                fh.write(f"{e.edge_type}\t{u}\t{v}\t{a}\t{prob!r}\n")
