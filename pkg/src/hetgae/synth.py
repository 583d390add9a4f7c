"""Synthetic heterogeneous graph generator with planted class structure.

Target nodes get classes uniformly; each attribute node is assigned a
class affinity and links preferentially to targets of that class,
controlled by a homophily strength h in [0, 1]. A noise fraction rho adds
uniformly random legal edges that are tagged in the graph's provenance so
denoising experiments have an exact oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graph import MULTICLASS, GraphSchema, HeteroGraph, sample_splits


@dataclass
class SyntheticSpec:
    """Parameters of a planted-structure heterogeneous graph."""

    node_counts: dict                    # type -> count; first key is the target type
    triples: list                        # (type_u, type_v, edge_type)
    target_type: str
    num_classes: int = 3
    homophily: float = 1.0               # h: 1 = attribute links fully class-aligned
    noise_fraction: float = 0.0          # rho: extra random legal edges / planted edges
    density: dict = field(default_factory=dict)   # edge_type -> pair density
    feature_dim: dict = field(default_factory=dict)  # type -> feature arity
    feature_noise: float = 0.4           # stddev of Gaussian around the class mean
    default_density: float = 0.05

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if not (0.0 <= self.homophily <= 1.0):
            raise ConfigError(f"homophily must be in [0, 1], got {self.homophily}")
        if self.noise_fraction < 0.0:
            raise ConfigError(f"noise fraction must be >= 0, got {self.noise_fraction}")
        for r, d in self.density.items():
            if not (0.0 <= d <= 1.0):
                raise ConfigError(f"density for {r!r} must be in [0, 1], got {d}")

    def schema(self, task=MULTICLASS):
        return GraphSchema(
            node_types=tuple(self.node_counts),
            edge_types=tuple(r for _, _, r in self.triples),
            triples={r: (tu, tv) for tu, tv, r in self.triples},
            target_type=self.target_type,
            num_classes=self.num_classes,
            task=task,
        )


def imdb_style_spec(n_target=100, n_attrs=(300, 50, 40), num_classes=5,
                    homophily=0.9, noise_fraction=0.2, density=0.02,
                    feature_dim=16, feature_noise=0.4):
    """Four node types and three legal target-attribute triples."""
    names = ["M", "A", "K", "D"]
    counts = {"M": n_target}
    triples = []
    for name, n in zip(names[1:], n_attrs):
        counts[name] = n
        triples.append(("M", name, f"M{name}"))
    return SyntheticSpec(
        node_counts=counts,
        triples=triples,
        target_type="M",
        num_classes=num_classes,
        homophily=homophily,
        noise_fraction=noise_fraction,
        density={r: density for _, _, r in triples},
        feature_dim={t: feature_dim for t in counts},
        feature_noise=feature_noise,
    )


def separable_spec(n_target=60, num_classes=3):
    """Perfectly separable preset: h=1, no noise."""
    return imdb_style_spec(
        n_target=n_target, n_attrs=(90, 30, 30), num_classes=num_classes,
        homophily=1.0, noise_fraction=0.0, density=0.05, feature_noise=0.25,
    )


def generate_synthetic(spec, seed):
    """Materialize a SyntheticSpec deterministically under `seed`.

    The returned graph's ``provenance`` dict tags every edge as "planted"
    or "noise".
    """
    rng = np.random.default_rng(seed)
    schema = spec.schema()
    C = spec.num_classes
    h = spec.homophily

    # class assignment: targets uniform at random, attributes random affinity
    n_target = spec.node_counts[spec.target_type]
    target_class = rng.integers(0, C, size=n_target)
    affinity = {}
    for t, n in spec.node_counts.items():
        if t != spec.target_type:
            affinity[t] = rng.integers(0, C, size=n)

    # features: Gaussian around a per-(type, class) mean
    node_ids = {t: [f"{t}_{i}" for i in range(n)] for t, n in spec.node_counts.items()}
    features = {}
    for t, n in spec.node_counts.items():
        dim = spec.feature_dim.get(t, 8)
        means = rng.normal(0.0, 1.0, size=(C, dim))
        cls = target_class if t == spec.target_type else affinity[t]
        features[t] = means[cls] + rng.normal(0.0, spec.feature_noise, size=(n, dim))

    # planted edges: per legal triple, connection probability mixes a
    # class-aligned component (weight h) with a uniform one (weight 1-h),
    # keeping the expected density at the configured value.
    planted = []
    offsets = {}
    off = 0
    for t in schema.node_types:
        offsets[t] = off
        off += spec.node_counts[t]
    for tu, tv, etype in spec.triples:
        dens = spec.density.get(etype, spec.default_density)
        cls_u = target_class if tu == spec.target_type else affinity[tu]
        cls_v = target_class if tv == spec.target_type else affinity[tv]
        same = cls_u[:, None] == cls_v[None, :]
        p_same = dens * (1.0 + h * (C - 1))
        p_diff = dens * (1.0 - h)
        if p_same > 1.0:
            raise ConfigError(
                f"density {dens} too high for homophily {h} with {C} classes "
                f"(same-class probability {p_same:.3f} > 1)")
        prob = np.where(same, p_same, p_diff)
        draws = rng.random(prob.shape) < prob
        if tu == tv:
            draws = np.triu(draws, 1)
        for lu, lv in zip(*np.nonzero(draws)):
            planted.append((offsets[tu] + int(lu), offsets[tv] + int(lv), etype))

    # noise edges: uniformly random legal non-edges
    existing = set(planted)
    n_noise = int(round(spec.noise_fraction * len(planted)))
    noise = []
    guard = 0
    while len(noise) < n_noise:
        guard += 1
        if guard > 100 * max(n_noise, 1):
            raise ConfigError("noise fraction too high for the available legal non-edges")
        tu, tv, etype = spec.triples[int(rng.integers(0, len(spec.triples)))]
        u = offsets[tu] + int(rng.integers(0, spec.node_counts[tu]))
        v = offsets[tv] + int(rng.integers(0, spec.node_counts[tv]))
        if tu == tv:
            if u == v:
                continue
            u, v = min(u, v), max(u, v)
        key = (u, v, etype)
        if key in existing:
            continue
        existing.add(key)
        noise.append(key)

    labels = {offsets[spec.target_type] + i: int(c) for i, c in enumerate(target_class)}
    train, valid, test = sample_splits(sorted(labels), seed)
    provenance = {e: "planted" for e in planted}
    provenance.update({e: "noise" for e in noise})
    return HeteroGraph(
        schema, node_ids, features, planted + noise, labels,
        train, valid, test, provenance=provenance,
    )
