"""Shared-space projection and edge-type-aware attention encoder."""

import numpy as np
import pytest

from hetgae import tensor as T
from hetgae.encoder import EncoderParameters, _message_arrays, encode, project_features
from hetgae.errors import ConfigError
from hetgae.trainer import ModelParameters
from hetgae.verify import fixture_config


class TestProjection:
    def test_shape_and_order(self, tiny_graph):
        model = ModelParameters(tiny_graph, fixture_config())
        h_s = project_features(tiny_graph, model.encoder)
        assert h_s.shape == (6, 8)

    def test_elu_lower_bound(self, tiny_graph):
        model = ModelParameters(tiny_graph, fixture_config())
        h_s = project_features(tiny_graph, model.encoder)
        assert np.all(h_s.values > -1.0)  # elu range

    def test_feature_arity_mismatch(self, tiny_graph):
        model = ModelParameters(tiny_graph, fixture_config())
        bad = tiny_graph.replace_edges(tiny_graph.edges)
        bad.features["P"] = np.ones((3, 7))
        with pytest.raises(ConfigError, match="arity"):
            project_features(bad, model.encoder)


class TestMessageArrays:
    def test_both_directions_plus_self_loops(self, tiny_graph):
        m_src, m_dst, m_ety = _message_arrays(tiny_graph)
        E, n = len(tiny_graph.edges), tiny_graph.num_nodes
        assert len(m_src) == 2 * E + n
        # self-loops carry the extra edge-type index
        assert np.all(m_ety[2 * E:] == len(tiny_graph.schema.edge_types))
        assert np.array_equal(m_src[2 * E:], np.arange(n))
        # reverse direction present
        assert set(zip(m_src[:E], m_dst[:E])) == {(v, u) for u, v in zip(m_src[E:2*E], m_dst[E:2*E])}


class TestEncode:
    def test_output_shape(self, tiny_graph):
        model = ModelParameters(tiny_graph, fixture_config())
        h_s = project_features(tiny_graph, model.encoder)
        z = encode(tiny_graph, h_s, model.encoder)
        assert z.shape == (6, 8)

    def test_eval_mode_deterministic(self, tiny_graph):
        model = ModelParameters(tiny_graph, fixture_config())
        h_s = project_features(tiny_graph, model.encoder)
        a = encode(tiny_graph, h_s, model.encoder, training=False)
        h_s2 = project_features(tiny_graph, model.encoder)
        b = encode(tiny_graph, h_s2, model.encoder, training=False)
        assert np.array_equal(a.values, b.values)

    def test_training_without_dropout_equals_eval(self, tiny_graph):
        model = ModelParameters(tiny_graph, fixture_config())
        h_s = project_features(tiny_graph, model.encoder)
        a = encode(tiny_graph, h_s, model.encoder, training=False)
        h_s2 = project_features(tiny_graph, model.encoder)
        b = encode(tiny_graph, h_s2, model.encoder, training=True,
                   dropout_rate=0.0, rng=np.random.default_rng(0))
        assert np.allclose(a.values, b.values)

    def test_attention_normalized_per_destination(self, tiny_graph):
        model = ModelParameters(tiny_graph, fixture_config())
        h_s = project_features(tiny_graph, model.encoder)
        _, (m_src, m_dst, m_ety, rows) = encode(
            tiny_graph, h_s, model.encoder, return_attention=True)
        assert len(rows) == model.encoder.layers * model.encoder.heads
        for _, _, att in rows:
            sums = np.zeros(tiny_graph.num_nodes)
            np.add.at(sums, m_dst, att.reshape(-1))
            assert np.allclose(sums, 1.0)

    def test_isolated_node_keeps_information(self, tiny_graph):
        # remove all edges: with only self-loops the output must stay finite
        # and differ across nodes (self information preserved)
        bare = tiny_graph.replace_edges([])
        model = ModelParameters(bare, fixture_config())
        h_s = project_features(bare, model.encoder)
        z = encode(bare, h_s, model.encoder)
        assert np.all(np.isfinite(z.values))
        assert not np.allclose(z.values[0], z.values[1])

    def test_dim_must_divide_heads(self, tiny_graph):
        with pytest.raises(ConfigError, match="divisible"):
            EncoderParameters(tiny_graph.schema, {"P": 3, "Q": 2}, dim=10, heads=4)

    def test_edge_type_embedding_rows(self, tiny_graph):
        enc = EncoderParameters(tiny_graph.schema, {"P": 3, "Q": 2}, dim=8, heads=2,
                                layers=2)
        for layer in range(2):
            assert enc.edge_emb[layer].shape == (len(tiny_graph.schema.edge_types) + 1,
                                                 4)

    def test_named_covers_all_layers(self, tiny_graph):
        enc = EncoderParameters(tiny_graph.schema, {"P": 3, "Q": 2}, dim=8, heads=2,
                                layers=3)
        names = enc.named()
        assert sum(1 for n in names if n.startswith("enc.value_w")) == 3
        assert "enc.proj_w.P" in names and "enc.proj_b.Q" in names
