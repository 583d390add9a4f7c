"""Joint-loss training loop, early stopping, and F1 evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .decoder import DecoderParameters, FocalConfig, reconstruction_loss, score_pairs, type_transform
from .encoder import EncoderParameters, encode, project_features
from .errors import ConfigError, NumericError
from .graph import MULTICLASS, enumerate_legal_pairs
from .heads import HeadParameters, classification_loss, fbc_forward, hgc_forward


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    dim: int = 64
    alpha: float = 0.3
    beta: float = 0.1
    focal: FocalConfig = field(default_factory=FocalConfig)
    learning_rate: float = 5e-4
    weight_decay: float = 1e-4
    max_epochs: int = 300
    patience: int = 30
    seed: int = 0
    dropout: float = 0.5
    heads: int = 8
    layers: int = 3
    negative_ratio: int | None = None  # None = full pair enumeration
    type_aware_decoder: bool = True

    def __post_init__(self):
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ConfigError(f"loss weights must be >= 0, got alpha={self.alpha} beta={self.beta}")
        if self.alpha + self.beta >= 1.0:
            raise ConfigError(
                f"loss weights must satisfy alpha + beta < 1, got {self.alpha} + {self.beta}")
        if self.patience > self.max_epochs:
            raise ConfigError(f"patience {self.patience} exceeds max epochs {self.max_epochs}")


class ModelParameters:
    """Encoder, decoder and head weights of one THeGAU-style model."""

    def __init__(self, graph, cfg, rng=None):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        feature_dims = {t: graph.features[t].shape[1] for t in graph.schema.node_types}
        self.cfg = cfg
        self.encoder = EncoderParameters(graph.schema, feature_dims, dim=cfg.dim,
                                         heads=cfg.heads, layers=cfg.layers, rng=rng)
        self.decoder = DecoderParameters(graph.schema, cfg.dim, rng=rng,
                                         type_aware=cfg.type_aware_decoder)
        self.heads = HeadParameters(cfg.dim, graph.schema.num_classes, rng=rng)

    def named(self):
        out = {}
        out.update(self.encoder.named())
        out.update(self.decoder.named())
        out.update(self.heads.named())
        return out

    def snapshot(self):
        return {name: p.values.copy() for name, p in self.named().items()}

    def restore(self, snap):
        for name, p in self.named().items():
            p.values = snap[name].copy()

    def save(self, path):
        T.save_tensors(path, self.named())

    def load(self, path):
        loaded = T.load_tensors(path)
        for name, p in self.named().items():
            if name not in loaded:
                raise ConfigError(f"checkpoint missing parameter {name!r}")
            if loaded[name].shape != p.values.shape:
                raise ConfigError(
                    f"checkpoint dimension mismatch for {name!r}: "
                    f"{loaded[name].shape} vs expected {p.values.shape}")
            p.values = loaded[name]


class AdamW:
    """Adaptive-moment optimizer with decoupled weight decay."""

    def __init__(self, params, lr=5e-4, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params.values()) if isinstance(params, dict) else list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.values)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = (self.m[i] / b1t) / (np.sqrt(self.v[i] / b2t) + self.eps)
            p.values -= self.lr * (update + self.weight_decay * p.values)


# ---------------------------------------------------------------------------
# metrics


def micro_f1(tp, fp, fn):
    """2 TP / (2 TP + FP + FN) over globally pooled counts."""
    if tp < 0 or fp < 0 or fn < 0:
        raise ConfigError("negative confusion counts")
    if tp == 0 and fp == 0 and fn == 0:
        raise ConfigError("micro F1 undefined: all counts zero")
    return 2.0 * tp / (2.0 * tp + fp + fn)


def macro_f1(per_class_f1):
    """Unweighted mean of per-class F1 scores."""
    scores = list(per_class_f1)
    if not scores:
        raise ConfigError("macro F1 over an empty class list")
    return float(sum(scores)) / len(scores)


def f1_counts(y_true, y_pred, num_classes):
    """Per-class (tp, fp, fn) from 0/1 indicator matrices (m, C)."""
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    tp = (y_true & y_pred).sum(axis=0)
    fp = (~y_true & y_pred).sum(axis=0)
    fn = (y_true & ~y_pred).sum(axis=0)
    return tp, fp, fn


def f1_metrics(y_true, y_pred, num_classes):
    """(macro, micro) from indicator matrices; 0/0 per-class F1 counts as 0."""
    tp, fp, fn = f1_counts(y_true, y_pred, num_classes)
    per_class = []
    for c in range(num_classes):
        denom = 2.0 * tp[c] + fp[c] + fn[c]
        per_class.append(2.0 * tp[c] / denom if denom > 0 else 0.0)
    return macro_f1(per_class), micro_f1(int(tp.sum()), int(fp.sum()), int(fn.sum()))


@dataclass
class Metrics:
    macro: float
    micro: float


# ---------------------------------------------------------------------------
# forward passes


def joint_loss(l_ae, l_fb, l_hgnn, alpha, beta):
    """alpha L_AE + beta L_FB + (1 - alpha - beta) L_HGNN."""
    if alpha + beta >= 1.0 or alpha < 0.0 or beta < 0.0:
        raise ConfigError(f"invalid loss weights alpha={alpha} beta={beta}")
    combine = lambda a, b: T.add(a, b) if isinstance(a, T.Tensor) else a + b
    sc = lambda x, c: T.scale(x, c) if isinstance(x, T.Tensor) else c * x
    return combine(combine(sc(l_ae, alpha), sc(l_fb, beta)), sc(l_hgnn, 1.0 - alpha - beta))


def _row_positions(graph, idx):
    """Positions of global target indices within the labeled-target row order."""
    labeled = np.array(sorted(graph.labels), dtype=np.intp)
    pos = {g: i for i, g in enumerate(labeled)}
    return np.array([pos[g] for g in idx], dtype=np.intp)


def forward_losses(model, graph, cfg, idx, pairs=None, recon_graph=None,
                   training=False, rng=None):
    """The three loss terms of one pass, classification restricted to `idx`."""
    h_s = project_features(graph, model.encoder)
    z = encode(graph, h_s, model.encoder, training=training,
               dropout_rate=cfg.dropout, rng=rng)
    _, y_all = graph.label_matrix()
    rows = _row_positions(graph, idx)
    y = y_all[rows]
    z_t = T.gather_rows(z, idx)
    hs_t = T.gather_rows(h_s, idx)
    l_hgnn = classification_loss(hgc_forward(z_t, model.heads), y, graph.schema.task)
    l_fb = classification_loss(fbc_forward(hs_t, model.heads), y, graph.schema.task)
    if pairs is None:
        pairs = enumerate_legal_pairs(recon_graph if recon_graph is not None else graph)
    z_prime = type_transform(z, graph, model.decoder)
    preds = score_pairs(z_prime, graph, pairs)
    l_ae = reconstruction_loss(preds, cfg.focal, negative_ratio=cfg.negative_ratio, rng=rng)
    return l_ae, l_fb, l_hgnn


def predict_labels(model, graph, idx, cfg=None):
    """Hard label indicators on `idx` from the message-passing head."""
    with T.no_grad():
        h_s = project_features(graph, model.encoder)
        z = encode(graph, h_s, model.encoder, training=False)
        logits = hgc_forward(T.gather_rows(z, idx), model.heads).values
    if graph.schema.task == MULTICLASS:
        pred = np.zeros_like(logits, dtype=bool)
        pred[np.arange(len(idx)), logits.argmax(axis=1)] = True
    else:
        pred = logits >= 0.0  # sigmoid >= 0.5
    return pred


def evaluate(model, graph, idx):
    """Macro/Micro F1 of the message-passing head on `idx`."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size == 0:
        raise ConfigError("evaluate called with an empty index set")
    pred = predict_labels(model, graph, idx)
    _, y_all = graph.label_matrix()
    y = y_all[_row_positions(graph, idx)].astype(bool)
    macro, micro = f1_metrics(y, pred, graph.schema.num_classes)
    return Metrics(macro, micro)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    l_ae: float
    l_fb: float
    l_hgnn: float
    val_macro: float
    val_micro: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    seconds: float = 0.0
    test_macro: float | None = None
    test_micro: float | None = None

    def jsonl(self, include_summary=True):
        """Machine-readable stream; wall time deliberately excluded so that
        repeated runs with one seed are byte-identical."""
        lines = []
        for r in self.epochs:
            lines.append(json.dumps({
                "epoch": r.epoch, "loss": r.loss, "l_ae": r.l_ae, "l_fb": r.l_fb,
                "l_hgnn": r.l_hgnn, "val_macro": r.val_macro, "val_micro": r.val_micro,
            }, sort_keys=True))
        if include_summary:
            lines.append(json.dumps({
                "best_epoch": self.best_epoch,
                "test_macro": self.test_macro,
                "test_micro": self.test_micro,
            }, sort_keys=True))
        return "\n".join(lines) + "\n"


def train(graph, cfg, recon_graph=None, stream=None):
    """Run the full joint training loop and return (model, report).

    `recon_graph` overrides the reconstruction ground truth (used when
    training on an augmented graph whose added edges must not become
    positives). Best parameters by validation macro F1 are restored before
    returning; ties break by micro F1, then lower validation loss, then
    earlier epoch.
    """
    if len(graph.train_idx) == 0:
        raise ConfigError("empty train split")
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    model = ModelParameters(graph, cfg, rng=rng)
    optimizer = AdamW(model.named(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    pairs = enumerate_legal_pairs(recon_graph if recon_graph is not None else graph)
    report = TrainReport()
    best_key = None
    best_snap = None
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        optimizer.zero_grad()
        l_ae, l_fb, l_hgnn = forward_losses(
            model, graph, cfg, graph.train_idx, pairs=pairs, training=True, rng=rng)
        loss = joint_loss(l_ae, l_fb, l_hgnn, cfg.alpha, cfg.beta)
        if not np.isfinite(loss.item()):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        T.backward(loss)
        optimizer.step()

        with T.no_grad():
            v_ae, v_fb, v_hgnn = forward_losses(
                model, graph, cfg, graph.valid_idx, pairs=pairs, training=False)
            val_loss = joint_loss(v_ae.item(), v_fb.item(), v_hgnn.item(), cfg.alpha, cfg.beta)
        val = evaluate(model, graph, graph.valid_idx)
        record = EpochRecord(epoch, loss.item(), l_ae.item(), l_fb.item(),
                             l_hgnn.item(), val.macro, val.micro)
        report.epochs.append(record)
        if stream is not None:
            stream.write(json.dumps({
                "epoch": record.epoch, "loss": record.loss, "l_ae": record.l_ae,
                "l_fb": record.l_fb, "l_hgnn": record.l_hgnn,
                "val_macro": record.val_macro, "val_micro": record.val_micro,
            }, sort_keys=True) + "\n")

        key = (val.macro, val.micro, -val_loss, -epoch)
        if best_key is None or key > best_key:
            best_key = key
            best_snap = model.snapshot()
            report.best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    model.restore(best_snap)
    report.seconds = time.perf_counter() - start
    return model, report
