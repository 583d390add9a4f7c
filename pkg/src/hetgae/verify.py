"""Finite-difference verification of every differentiable loss path."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .decoder import FocalConfig
from .graph import GraphSchema, HeteroGraph
from .trainer import ModelParameters, TrainConfig, forward_losses, joint_loss


def six_node_fixture():
    """Tiny two-type graph used by the gradient-check command."""
    schema = GraphSchema(
        node_types=("P", "Q"),
        edge_types=("PQ",),
        triples={"PQ": ("P", "Q")},
        target_type="P",
        num_classes=2,
    )
    node_ids = {"P": ["p0", "p1", "p2"], "Q": ["q0", "q1", "q2"]}
    features = {
        "P": np.array([[1.0, 0.2, -0.3], [0.4, -1.1, 0.5], [-0.7, 0.9, 0.1]]),
        "Q": np.array([[0.3, -0.2], [-0.6, 1.2], [0.8, 0.4]]),
    }
    edges = [(0, 3, "PQ"), (0, 4, "PQ"), (1, 4, "PQ"), (2, 5, "PQ")]
    labels = {0: 0, 1: 1, 2: 0}
    return HeteroGraph(schema, node_ids, features, edges, labels,
                       train_idx=[0, 1], valid_idx=[2], test_idx=[])


def fixture_config(seed=0):
    return TrainConfig(dim=8, heads=2, layers=2, dropout=0.0, seed=seed,
                       alpha=0.3, beta=0.1, focal=FocalConfig())


def max_rel_error(loss_fn, params, eps=1e-5):
    """Max over all parameter coordinates of the relative analytic vs
    central-difference gradient error for a scalar loss."""
    for p in params.values():
        p.zero_grad()
    T.backward(loss_fn())
    worst = 0.0
    with T.no_grad():
        for p in params.values():
            analytic = p.grad if p.grad is not None else np.zeros_like(p.values)
            flat = p.values.reshape(-1)
            aflat = analytic.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                numeric = (up - down) / (2.0 * eps)
                denom = max(1e-8, abs(aflat[i]) + abs(numeric))
                worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst


def _broken_sigmoid(a):
    a = T._as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.values))
    # deliberately wrong backward rule, used as a negative control
    return T._record(out, (a,), lambda g: (g * out,))


def gradcheck_all(eps=1e-5, seed=0, inject_bug=False):
    """Max relative gradient error of each loss term on the 6-node fixture.

    Returns a dict {"l_ae": e, "l_fb": e, "l_hgnn": e, "joint": e}.
    """
    graph = six_node_fixture()
    cfg = fixture_config(seed)
    model = ModelParameters(graph, cfg, rng=np.random.default_rng(seed))
    params = model.named()

    names = ("l_ae", "l_fb", "l_hgnn", "joint")

    def all_terms():
        l_ae, l_fb, l_hgnn = forward_losses(model, graph, cfg, graph.train_idx)
        return l_ae, l_fb, l_hgnn, joint_loss(l_ae, l_fb, l_hgnn, cfg.alpha, cfg.beta)

    original_sigmoid = T.sigmoid
    if inject_bug:
        T.sigmoid = _broken_sigmoid
    try:
        analytic = {}
        for k, name in enumerate(names):
            for p in params.values():
                p.zero_grad()
            T.backward(all_terms()[k])
            analytic[name] = {
                pname: (p.grad.copy() if p.grad is not None else np.zeros_like(p.values))
                for pname, p in params.items()
            }
        worst = {name: 0.0 for name in names}
        # one finite-difference sweep checks all four terms at once
        with T.no_grad():
            for pname, p in params.items():
                flat = p.values.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + eps
                    up = [t.item() for t in all_terms()]
                    flat[i] = orig - eps
                    down = [t.item() for t in all_terms()]
                    flat[i] = orig
                    for k, name in enumerate(names):
                        numeric = (up[k] - down[k]) / (2.0 * eps)
                        a = analytic[name][pname].reshape(-1)[i]
                        denom = max(1e-8, abs(a) + abs(numeric))
                        worst[name] = max(worst[name], abs(a - numeric) / denom)
        return {name: float(err) for name, err in worst.items()}
    finally:
        T.sigmoid = original_sigmoid
