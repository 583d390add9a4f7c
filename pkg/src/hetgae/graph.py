"""Heterogeneous graph data model: schema, validation, dataset I/O and
legal-pair enumeration.

Node ids in files are opaque strings; internally every node gets a dense
global index, grouped by node type (types in schema order, nodes in file
order within a type).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

MULTICLASS = "multiclass"
MULTILABEL = "multilabel"


@dataclass(frozen=True)
class GraphSchema:
    """Type-level description of a heterogeneous graph.

    ``triples`` maps edge type -> (type_u, type_v); an edge of that type may
    connect a type_u node with a type_v node in either orientation.
    """

    node_types: tuple
    edge_types: tuple
    triples: dict
    target_type: str
    num_classes: int
    task: str = MULTICLASS

    def __post_init__(self):
        if len(self.node_types) + len(self.edge_types) <= 2:
            raise DataError(
                "not a heterogeneous schema: need |node types| + |edge types| > 2, "
                f"got {len(self.node_types)} + {len(self.edge_types)}"
            )
        if self.target_type not in self.node_types:
            raise DataError(f"target type {self.target_type!r} not among node types")
        if self.num_classes < 2:
            raise DataError(f"need at least 2 classes, got {self.num_classes}")
        if self.task not in (MULTICLASS, MULTILABEL):
            raise DataError(f"unknown task {self.task!r}")
        for etype, (tu, tv) in self.triples.items():
            if tu not in self.node_types or tv not in self.node_types:
                raise DataError(f"edge type {etype!r} references unknown node type")

    def legal_triples(self):
        """Symmetric closure of the (type_u, type_v, edge_type) triples."""
        out = set()
        for etype, (tu, tv) in self.triples.items():
            out.add((tu, tv, etype))
            out.add((tv, tu, etype))
        return out

    def is_legal(self, tu, tv, etype):
        pair = self.triples.get(etype)
        return pair is not None and (pair == (tu, tv) or pair == (tv, tu))


class HeteroGraph:
    """Immutable typed graph with per-type feature matrices and label splits.

    Attributes:
        schema: GraphSchema.
        node_ids: dict type -> list of original string ids (file order).
        features: dict type -> (n_t, f_t) float64 matrix.
        edges: list of (u, v, etype) with global indices, canonical
            orientation (u has the triple's type_u), stored once per pair.
        labels: dict global target index -> class int (multiclass) or
            binary vector (multilabel).
        train_idx / valid_idx / test_idx: sorted int arrays of global
            target-node indices.
    """

    def __init__(self, schema, node_ids, features, edges, labels,
                 train_idx, valid_idx, test_idx, provenance=None):
        self.schema = schema
        self.node_ids = {t: list(ids) for t, ids in node_ids.items()}
        self.features = {t: np.asarray(f, dtype=np.float64) for t, f in features.items()}
        self.type_offset = {}
        offset = 0
        for t in schema.node_types:
            self.type_offset[t] = offset
            offset += len(self.node_ids.get(t, ()))
        self.num_nodes = offset
        self.node_type = np.empty(offset, dtype=object)
        for t in schema.node_types:
            base = self.type_offset[t]
            self.node_type[base:base + len(self.node_ids.get(t, ()))] = t
        # canonical sorted order makes message aggregation (and therefore
        # float summation order) independent of input edge order
        self.edges = sorted(self._canonical(u, v, r) for u, v, r in edges)
        self.labels = dict(labels)
        self.train_idx = np.asarray(sorted(train_idx), dtype=np.intp)
        self.valid_idx = np.asarray(sorted(valid_idx), dtype=np.intp)
        self.test_idx = np.asarray(sorted(test_idx), dtype=np.intp)
        # synthetic graphs carry noise/planted edge tags for evaluation
        self.provenance = provenance
        self._validate()

    # -- index helpers ------------------------------------------------------

    def type_count(self, t):
        return len(self.node_ids.get(t, ()))

    def type_range(self, t):
        base = self.type_offset[t]
        return base, base + self.type_count(t)

    def global_index(self, t, local):
        return self.type_offset[t] + local

    def local_index(self, g):
        return g - self.type_offset[self.node_type[g]]

    def node_name(self, g):
        t = self.node_type[g]
        return self.node_ids[t][g - self.type_offset[t]]

    def target_indices(self):
        lo, hi = self.type_range(self.schema.target_type)
        return np.arange(lo, hi, dtype=np.intp)

    def _canonical(self, u, v, etype):
        tu, tv = self.schema.triples[etype]
        if self.node_type[u] == tv and self.node_type[v] == tu and tu != tv:
            u, v = v, u
        elif tu == tv and u > v:
            u, v = v, u
        return (u, v, etype)

    # -- validation ---------------------------------------------------------

    def _validate(self):
        for t in self.features:
            if t not in self.schema.node_types:
                raise DataError(f"features given for unknown node type {t!r}")
            if self.features[t].shape[0] != self.type_count(t):
                raise DataError(
                    f"feature matrix for type {t!r} has {self.features[t].shape[0]} rows, "
                    f"expected {self.type_count(t)}"
                )
        seen = set()
        for u, v, etype in self.edges:
            if u >= self.num_nodes or v >= self.num_nodes or u < 0 or v < 0:
                raise DataError(f"edge ({u}, {v}, {etype}) references unknown node")
            if etype not in self.schema.triples:
                raise DataError(f"edge ({u}, {v}) uses edge type {etype!r} absent from schema")
            if not self.schema.is_legal(self.node_type[u], self.node_type[v], etype):
                raise DataError(
                    f"edge ({self.node_name(u)}, {self.node_name(v)}, {etype}) violates schema: "
                    f"({self.node_type[u]}, {self.node_type[v]}) not legal for {etype!r}"
                )
            key = (u, v, etype)
            if key in seen:
                raise DataError(f"duplicate edge ({self.node_name(u)}, {self.node_name(v)}, {etype})")
            seen.add(key)
        lo, hi = self.type_range(self.schema.target_type)
        for g in self.labels:
            if not (lo <= g < hi):
                raise DataError(f"label on non-target node {self.node_name(g)!r}")
        splits = [set(self.train_idx), set(self.valid_idx), set(self.test_idx)]
        for i in range(3):
            for j in range(i + 1, 3):
                overlap = splits[i] & splits[j]
                if overlap:
                    g = next(iter(overlap))
                    raise DataError(f"node {self.node_name(g)!r} appears in more than one split")
        union = splits[0] | splits[1] | splits[2]
        if union != set(self.labels):
            raise DataError("splits do not partition the labeled target nodes")

    # -- derived structure --------------------------------------------------

    def edge_arrays(self):
        """(src, dst, etype_index) arrays per stored edge; etype index in schema order."""
        etype_ix = {r: i for i, r in enumerate(self.schema.edge_types)}
        if not self.edges:
            z = np.zeros(0, dtype=np.intp)
            return z, z, z
        src = np.array([e[0] for e in self.edges], dtype=np.intp)
        dst = np.array([e[1] for e in self.edges], dtype=np.intp)
        ety = np.array([etype_ix[e[2]] for e in self.edges], dtype=np.intp)
        return src, dst, ety

    def label_matrix(self):
        """(targets, C) label matrix over labeled target nodes, plus their indices."""
        idx = np.array(sorted(self.labels), dtype=np.intp)
        C = self.schema.num_classes
        Y = np.zeros((len(idx), C))
        for row, g in enumerate(idx):
            lab = self.labels[g]
            if self.schema.task == MULTICLASS:
                Y[row, int(lab)] = 1.0
            else:
                Y[row] = np.asarray(lab, dtype=np.float64)
        return idx, Y

    def replace_edges(self, edges):
        """New graph with the same nodes/labels/splits and a different edge set."""
        return HeteroGraph(
            self.schema, self.node_ids, self.features, edges, self.labels,
            self.train_idx, self.valid_idx, self.test_idx, provenance=self.provenance,
        )


@dataclass
class LegalPairEntry:
    """Candidate domain of one legal triple: all type_u × type_v node pairs."""

    edge_type: str
    type_u: str
    type_v: str
    n_u: int
    n_v: int
    adjacency: np.ndarray  # (n_u, n_v) float 0/1, ground truth a_{u,v}

    @property
    def candidates(self):
        if self.type_u == self.type_v:
            return self.n_u * (self.n_u - 1) // 2
        return self.n_u * self.n_v


@dataclass
class LegalPairSet:
    """All schema-valid candidate pairs, one entry per edge type."""

    entries: list = field(default_factory=list)

    @property
    def total_candidates(self):
        return sum(e.candidates for e in self.entries)

    @property
    def total_positives(self):
        total = 0
        for e in self.entries:
            adj = e.adjacency
            if e.type_u == e.type_v:
                total += int(np.triu(adj, 1).sum())
            else:
                total += int(adj.sum())
        return total


def enumerate_legal_pairs(graph):
    """Candidate node-pair domain per legal triple, with existing edges marked."""
    entries = []
    for etype in graph.schema.edge_types:
        tu, tv = graph.schema.triples[etype]
        n_u, n_v = graph.type_count(tu), graph.type_count(tv)
        adj = np.zeros((n_u, n_v))
        base_u, base_v = graph.type_offset[tu], graph.type_offset[tv]
        for u, v, r in graph.edges:
            if r != etype:
                continue
            lu, lv = u - base_u, v - base_v
            adj[lu, lv] = 1.0
            if tu == tv:
                adj[lv, lu] = 1.0
        entries.append(LegalPairEntry(etype, tu, tv, n_u, n_v, adj))
    return LegalPairSet(entries)


# ---------------------------------------------------------------------------
# dataset directory I/O


def _read_rows(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            rows.append((lineno, line.split()))
    return rows


def _require(path):
    if not os.path.isfile(path):
        raise DataError(f"missing dataset file: {path}")
    return path


def load_schema(path):
    node_types, edge_types, triples = [], [], {}
    target = None
    for lineno, fields in _read_rows(_require(path)):
        kind = fields[0]
        if kind == "nodetype" and len(fields) == 2:
            node_types.append(fields[1])
        elif kind == "edgetype" and len(fields) == 4:
            edge_types.append(fields[1])
            triples[fields[1]] = (fields[2], fields[3])
        elif kind == "target" and len(fields) == 4:
            target = (fields[1], int(fields[2]), fields[3])
        else:
            raise DataError(f"{path}:{lineno}: unrecognized schema line {' '.join(fields)!r}")
    if target is None:
        raise DataError(f"{path}: no target line")
    return GraphSchema(tuple(node_types), tuple(edge_types), triples,
                       target[0], target[1], target[2])


def load_graph(dataset_dir, seed=0):
    """Load a dataset directory into a validated HeteroGraph.

    When splits.tsv is absent, 24%/6%/70% train/valid/test splits over the
    labeled target nodes are sampled with `seed`.
    """
    schema = load_schema(os.path.join(dataset_dir, "schema.tsv"))

    nodes_path = _require(os.path.join(dataset_dir, "nodes.tsv"))
    node_ids = {t: [] for t in schema.node_types}
    raw_feats = {t: [] for t in schema.node_types}
    lookup = {}
    for lineno, fields in _read_rows(nodes_path):
        if len(fields) < 2:
            raise DataError(f"{nodes_path}:{lineno}: need <node_id> <node_type>")
        nid, ntype = fields[0], fields[1]
        if ntype not in schema.node_types:
            raise DataError(f"{nodes_path}:{lineno}: unknown node type {ntype!r}")
        if nid in lookup:
            raise DataError(f"{nodes_path}:{lineno}: duplicate node id {nid!r}")
        feats = [float(x) for x in fields[2:]]
        if raw_feats[ntype] and len(feats) != len(raw_feats[ntype][0]):
            raise DataError(f"{nodes_path}:{lineno}: feature arity mismatch for type {ntype!r}")
        lookup[nid] = (ntype, len(node_ids[ntype]))
        node_ids[ntype].append(nid)
        raw_feats[ntype].append(feats)

    features = {}
    for t in schema.node_types:
        n = len(node_ids[t])
        arity = len(raw_feats[t][0]) if raw_feats[t] else 0
        if arity == 0:
            features[t] = np.eye(n)  # featureless types get one-hot identity
        else:
            features[t] = np.array(raw_feats[t], dtype=np.float64)

    offsets = {}
    off = 0
    for t in schema.node_types:
        offsets[t] = off
        off += len(node_ids[t])

    def resolve(nid, path, lineno):
        if nid not in lookup:
            raise DataError(f"{path}:{lineno}: unknown node id {nid!r}")
        t, local = lookup[nid]
        return offsets[t] + local, t

    edges_path = _require(os.path.join(dataset_dir, "edges.tsv"))
    edges = []
    for lineno, fields in _read_rows(edges_path):
        if len(fields) != 3:
            raise DataError(f"{edges_path}:{lineno}: need <u> <v> <edge_type>")
        u, tu = resolve(fields[0], edges_path, lineno)
        v, tv = resolve(fields[1], edges_path, lineno)
        etype = fields[2]
        if etype not in schema.triples:
            raise DataError(f"{edges_path}:{lineno}: edge type {etype!r} absent from schema")
        if not schema.is_legal(tu, tv, etype):
            raise DataError(
                f"{edges_path}:{lineno}: edge ({fields[0]}, {fields[1]}, {etype}) "
                f"violates schema: ({tu}, {tv}) is not legal for {etype!r}"
            )
        edges.append((u, v, etype))

    labels_path = _require(os.path.join(dataset_dir, "labels.tsv"))
    labels = {}
    for lineno, fields in _read_rows(labels_path):
        if len(fields) != 2:
            raise DataError(f"{labels_path}:{lineno}: need <node_id> <label>")
        g, t = resolve(fields[0], labels_path, lineno)
        if t != schema.target_type:
            raise DataError(f"{labels_path}:{lineno}: label on non-target node {fields[0]!r}")
        if schema.task == MULTICLASS:
            lab = int(fields[1])
            if not (0 <= lab < schema.num_classes):
                raise DataError(f"{labels_path}:{lineno}: label {lab} out of range")
            labels[g] = lab
        else:
            vec = np.zeros(schema.num_classes)
            for part in fields[1].split(","):
                k = int(part)
                if not (0 <= k < schema.num_classes):
                    raise DataError(f"{labels_path}:{lineno}: label {k} out of range")
                vec[k] = 1.0
            labels[g] = vec

    splits_path = os.path.join(dataset_dir, "splits.tsv")
    if os.path.isfile(splits_path):
        split_of = {}
        for lineno, fields in _read_rows(splits_path):
            if len(fields) != 2 or fields[1] not in ("train", "valid", "test"):
                raise DataError(f"{splits_path}:{lineno}: need <node_id> <train|valid|test>")
            g, _ = resolve(fields[0], splits_path, lineno)
            if g in split_of:
                raise DataError(f"{splits_path}:{lineno}: node {fields[0]!r} assigned twice")
            split_of[g] = fields[1]
        train = [g for g, s in split_of.items() if s == "train"]
        valid = [g for g, s in split_of.items() if s == "valid"]
        test = [g for g, s in split_of.items() if s == "test"]
    else:
        train, valid, test = sample_splits(sorted(labels), seed)

    return HeteroGraph(schema, node_ids, features, edges, labels, train, valid, test)


def sample_splits(labeled, seed, train_frac=0.24, valid_frac=0.06):
    """24%/6%/70% split over the labeled target nodes."""
    labeled = np.asarray(sorted(labeled), dtype=np.intp)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(labeled))
    n_train = int(round(train_frac * len(labeled)))
    n_valid = int(round(valid_frac * len(labeled)))
    train = labeled[perm[:n_train]]
    valid = labeled[perm[n_train:n_train + n_valid]]
    test = labeled[perm[n_train + n_valid:]]
    return list(train), list(valid), list(test)


def save_graph(graph, dataset_dir):
    """Write a dataset directory that load_graph reads back equivalently."""
    os.makedirs(dataset_dir, exist_ok=True)
    schema = graph.schema
    with open(os.path.join(dataset_dir, "schema.tsv"), "w", encoding="utf-8") as fh:
        for t in schema.node_types:
            fh.write(f"nodetype\t{t}\n")
        for r in schema.edge_types:
            tu, tv = schema.triples[r]
            fh.write(f"edgetype\t{r}\t{tu}\t{tv}\n")
        fh.write(f"target\t{schema.target_type}\t{schema.num_classes}\t{schema.task}\n")
    with open(os.path.join(dataset_dir, "nodes.tsv"), "w", encoding="utf-8") as fh:
        for t in schema.node_types:
            feats = graph.features[t]
            identity = feats.shape == (len(graph.node_ids[t]),) * 2 and np.array_equal(
                feats, np.eye(len(graph.node_ids[t])))
            for local, nid in enumerate(graph.node_ids[t]):
                if identity:
                    fh.write(f"{nid}\t{t}\n")
                else:
                    vals = "\t".join(repr(float(x)) for x in feats[local])
                    fh.write(f"{nid}\t{t}\t{vals}\n" if vals else f"{nid}\t{t}\n")
    with open(os.path.join(dataset_dir, "edges.tsv"), "w", encoding="utf-8") as fh:
        for u, v, r in graph.edges:
            fh.write(f"{graph.node_name(u)}\t{graph.node_name(v)}\t{r}\n")
    with open(os.path.join(dataset_dir, "labels.tsv"), "w", encoding="utf-8") as fh:
        for g in sorted(graph.labels):
            lab = graph.labels[g]
            if schema.task == MULTICLASS:
                text = str(int(lab))
            else:
                text = ",".join(str(i) for i in np.flatnonzero(np.asarray(lab)))
            fh.write(f"{graph.node_name(g)}\t{text}\n")
    with open(os.path.join(dataset_dir, "splits.tsv"), "w", encoding="utf-8") as fh:
        for name, idx in (("train", graph.train_idx), ("valid", graph.valid_idx),
                          ("test", graph.test_idx)):
            for g in idx:
                fh.write(f"{graph.node_name(g)}\t{name}\n")
