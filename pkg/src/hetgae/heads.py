"""The two classifiers: a two-layer head on the message-passed embeddings
and a single-layer skip-connection head on the projected features."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .graph import MULTICLASS, MULTILABEL


class HeadParameters:
    """Weights of both classification heads (output width = num classes)."""

    def __init__(self, dim, num_classes, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.num_classes = num_classes
        self.hgc_w1 = T.glorot_uniform(rng, (dim, dim), dim, dim)
        self.hgc_b1 = T.zeros((dim,))
        self.hgc_w2 = T.glorot_uniform(rng, (dim, num_classes), dim, num_classes)
        self.hgc_b2 = T.zeros((num_classes,))
        self.fbc_w = T.glorot_uniform(rng, (dim, num_classes), dim, num_classes)
        self.fbc_b = T.zeros((num_classes,))

    def named(self, prefix="head"):
        return {
            f"{prefix}.hgc_w1": self.hgc_w1, f"{prefix}.hgc_b1": self.hgc_b1,
            f"{prefix}.hgc_w2": self.hgc_w2, f"{prefix}.hgc_b2": self.hgc_b2,
            f"{prefix}.fbc_w": self.fbc_w, f"{prefix}.fbc_b": self.fbc_b,
        }


def hgc_forward(z_targets, params):
    """Two affine layers with elu between; logits without a final link."""
    hidden = T.elu(T.add(T.matmul(z_targets, params.hgc_w1), params.hgc_b1))
    return T.add(T.matmul(hidden, params.hgc_w2), params.hgc_b2)


def fbc_forward(hs_targets, params):
    """Single affine layer on the projection-layer embeddings."""
    return T.add(T.matmul(hs_targets, params.fbc_w), params.fbc_b)


def classification_loss(logits, y, task):
    """Mean softmax cross-entropy (multiclass) or mean elementwise binary
    cross-entropy on sigmoid outputs (multilabel).

    `y` is a (m, C) matrix: one-hot rows for multiclass, multi-hot for
    multilabel.
    """
    y = np.asarray(y, dtype=np.float64)
    if logits.shape[0] == 0 or y.shape[0] == 0:
        raise ConfigError("classification loss over an empty index set")
    if logits.shape != y.shape:
        raise ConfigError(f"logit/label shape mismatch: {logits.shape} vs {y.shape}")
    if task == MULTICLASS:
        labels = y.argmax(axis=1)
        # stable log-sum-exp with a constant per-row shift
        shift = logits.values.max(axis=1, keepdims=True)
        z = T.sub(logits, T.Tensor(shift))
        lse = T.log(T.tsum(T.exp(z), axis=1))
        picked = T.take_per_row(z, labels)
        return T.tmean(T.sub(lse, picked))
    if task == MULTILABEL:
        p = T.clamp(T.sigmoid(logits), 1e-12, 1.0 - 1e-12)
        one = T.Tensor(np.ones_like(y))
        yt = T.Tensor(y)
        terms = T.add(T.mul(yt, T.log(p)),
                      T.mul(T.sub(one, yt), T.log(T.sub(one, p))))
        return T.neg(T.tmean(terms))
    raise ConfigError(f"unknown task {task!r}")
