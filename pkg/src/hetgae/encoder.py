"""Shared-feature-space graph encoder.

Per-type projection layers map every node into one d-dimensional space
(H_s); L attention layers with per-head edge-type-aware logits then
produce the message-passed embeddings Z. Each node always attends to an
implicit self-loop carrying its own edge-type embedding, so isolated
nodes keep their features.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError


class EncoderParameters:
    """Projection + attention weights for the reference encoder."""

    def __init__(self, schema, feature_dims, dim=64, heads=8, layers=3, rng=None):
        if dim % heads != 0:
            raise ConfigError(f"hidden dim {dim} not divisible by {heads} heads")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.heads = heads
        self.layers = layers
        self.head_dim = dim // heads
        self.num_edge_types = len(schema.edge_types)
        self.proj_w = {}
        self.proj_b = {}
        for t in schema.node_types:
            f = feature_dims[t]
            self.proj_w[t] = T.glorot_uniform(rng, (f, dim), f, dim)
            self.proj_b[t] = T.zeros((dim,))
        dh = self.head_dim
        n_et = self.num_edge_types + 1  # extra row for the self-loop type
        self.value_w = []
        self.attn_src = []
        self.attn_dst = []
        self.attn_edge = []
        self.edge_emb = []
        for _ in range(layers):
            self.value_w.append(T.glorot_uniform(rng, (dim, dim), dim, dim))
            self.attn_src.append(T.glorot_uniform(rng, (heads, dh), dh, 1))
            self.attn_dst.append(T.glorot_uniform(rng, (heads, dh), dh, 1))
            self.attn_edge.append(T.glorot_uniform(rng, (heads, dh), dh, 1))
            self.edge_emb.append(T.glorot_uniform(rng, (n_et, dh), n_et, dh))

    def named(self, prefix="enc"):
        out = {}
        for t in self.proj_w:
            out[f"{prefix}.proj_w.{t}"] = self.proj_w[t]
            out[f"{prefix}.proj_b.{t}"] = self.proj_b[t]
        for layer in range(self.layers):
            out[f"{prefix}.value_w.{layer}"] = self.value_w[layer]
            out[f"{prefix}.attn_src.{layer}"] = self.attn_src[layer]
            out[f"{prefix}.attn_dst.{layer}"] = self.attn_dst[layer]
            out[f"{prefix}.attn_edge.{layer}"] = self.attn_edge[layer]
            out[f"{prefix}.edge_emb.{layer}"] = self.edge_emb[layer]
        return out


def project_features(graph, params):
    """H_s: per type, elu(W_t x + b_t), concatenated in node-index order."""
    blocks = []
    for t in graph.schema.node_types:
        feats = graph.features[t]
        if feats.shape[1] != params.proj_w[t].shape[0]:
            raise ConfigError(
                f"feature arity mismatch for type {t!r}: graph has {feats.shape[1]}, "
                f"parameters expect {params.proj_w[t].shape[0]}"
            )
        affine = T.add(T.matmul(T.Tensor(feats), params.proj_w[t]), params.proj_b[t])
        blocks.append(affine)
    return T.elu(T.concat(blocks, axis=0))


def _message_arrays(graph):
    """Directed messages: each stored edge both ways plus one self-loop per node."""
    src, dst, ety = graph.edge_arrays()
    n = graph.num_nodes
    loop_type = np.full(n, len(graph.schema.edge_types), dtype=np.intp)
    nodes = np.arange(n, dtype=np.intp)
    m_src = np.concatenate([src, dst, nodes])
    m_dst = np.concatenate([dst, src, nodes])
    m_ety = np.concatenate([ety, ety, loop_type])
    return m_src, m_dst, m_ety


def encode(graph, h_s, params, training=False, dropout_rate=0.5, rng=None,
           return_attention=False):
    """Z: L rounds of per-head edge-type attention with residual + elu."""
    m_src, m_dst, m_ety = _message_arrays(graph)
    n = graph.num_nodes
    h = h_s
    attention_rows = []
    for layer in range(params.layers):
        h_in = h
        if training and dropout_rate > 0.0:
            h_in = T.dropout(h_in, dropout_rate, rng)
        values = T.matmul(h_in, params.value_w[layer])
        head_outputs = []
        for head in range(params.heads):
            lo = head * params.head_dim
            vh = T.slice_cols(values, lo, lo + params.head_dim)
            q = T.reshape(T.slice_rows(params.attn_src[layer], head, head + 1), (params.head_dim, 1))
            k = T.reshape(T.slice_rows(params.attn_dst[layer], head, head + 1), (params.head_dim, 1))
            ae = T.reshape(T.slice_rows(params.attn_edge[layer], head, head + 1), (params.head_dim, 1))
            score_src = T.matmul(vh, q)                     # (N, 1)
            score_dst = T.matmul(vh, k)                     # (N, 1)
            score_ety = T.matmul(params.edge_emb[layer], ae)  # (|T_e|+1, 1)
            logits = T.leaky_relu(T.add(
                T.add(T.gather_rows(score_src, m_src), T.gather_rows(score_dst, m_dst)),
                T.gather_rows(score_ety, m_ety),
            ))
            # segment softmax over each destination's in-neighborhood;
            # the per-segment max shift is a constant, as usual
            seg_max = np.full((n, 1), -np.inf)
            np.maximum.at(seg_max, m_dst, logits.values)
            shifted = T.sub(logits, T.Tensor(seg_max[m_dst]))
            expd = T.exp(shifted)
            denom = T.scatter_add_rows(expd, m_dst, n)
            att = T.div(expd, T.gather_rows(denom, m_dst))
            if return_attention:
                attention_rows.append((layer, head, att.values.copy()))
            if training and dropout_rate > 0.0:
                att = T.dropout(att, dropout_rate, rng)
            messages = T.mul(att, T.gather_rows(vh, m_src))
            head_outputs.append(T.scatter_add_rows(messages, m_dst, n))
        h = T.elu(T.add(h_in, T.concat(head_outputs, axis=1)))
    if return_attention:
        return h, (m_src, m_dst, m_ety, attention_rows)
    return h
