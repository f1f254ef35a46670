"""Graph-classification datasets: text-format parsing, one-hot featurization, stratified folds.

File format (one dataset per file)::

    N                       # number of graphs
    n y                     # per graph: node count, integer label
    t k v_1 ... v_k         # n lines: node tag, neighbour count, 0-based neighbours

"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class ParseError(ValueError):
    """Malformed dataset file. ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with per-node feature rows.

    ``adjacency[u]`` is the sorted tuple of neighbours of ``u``; self loops are never
    stored (aggregation adds ``u`` itself). ``tags`` keeps the raw integer node tags.
    """

    adjacency: tuple[tuple[int, ...], ...]
    features: np.ndarray
    tags: tuple[int, ...] | None = None

    def __post_init__(self):
        n = len(self.adjacency)
        if n < 1:
            raise ValueError("graph needs at least one node")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError(f"features must have shape ({n}, d), got {feats.shape}")
        feats = feats.copy()
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        for u, nbrs in enumerate(self.adjacency):
            for v in nbrs:
                if not 0 <= v < n:
                    raise ValueError(f"neighbour {v} of node {u} out of range")
                if v == u:
                    raise ValueError(f"self loop at node {u}")
                if u not in self.adjacency[v]:
                    raise ValueError(f"asymmetric edge {u}->{v}")
        if self.tags is not None and len(self.tags) != n:
            raise ValueError("tags length differs from node count")

    @property
    def node_count(self) -> int:
        return len(self.adjacency)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.adjacency], dtype=np.int64)

    def adjacency_matrix(self) -> np.ndarray:
        n = self.node_count
        a = np.zeros((n, n))
        for u, nbrs in enumerate(self.adjacency):
            a[u, list(nbrs)] = 1.0
        return a

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes: new node ``i`` is old node ``perm[i]``."""
        perm = list(perm)
        inv = {old: new for new, old in enumerate(perm)}
        adj = tuple(tuple(sorted(inv[v] for v in self.adjacency[old])) for old in perm)
        tags = None if self.tags is None else tuple(self.tags[old] for old in perm)
        return Graph(adj, self.features[perm], tags)

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.adjacency, features, self.tags)

    @classmethod
    def from_edges(cls, n: int, edges, features=None, tags=None) -> "Graph":
        """Build from an undirected edge list; duplicates are collapsed."""
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise ValueError(f"self loop at node {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        if features is None:
            features = np.ones((n, 1))
        return cls(tuple(tuple(sorted(s)) for s in nbrs), features, tags)

    @classmethod
    def random(cls, rng, nodes: int, feature_dim: int = 3, edge_prob: float = 0.5) -> "Graph":
        """Erdos-Renyi graph with standard-normal node features."""
        rng = np.random.default_rng(rng)
        iu = np.triu_indices(nodes, 1)
        keep = rng.random(len(iu[0])) < edge_prob
        edges = list(zip(iu[0][keep].tolist(), iu[1][keep].tolist()))
        return cls.from_edges(nodes, edges, rng.standard_normal((nodes, feature_dim)))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    graphs: tuple[Graph, ...]
    labels: np.ndarray
    num_classes: int
    feature_mode: str = "raw"
    name: str = ""
    label_values: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        labels = np.asarray(self.labels, dtype=np.int64).copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if len(self.graphs) != len(labels):
            raise ValueError("graphs and labels differ in length")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("label out of range [0, num_classes)")

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def max_nodes(self) -> int:
        return max(g.node_count for g in self.graphs)

    def subset(self, idx) -> "LabeledDataset":
        idx = list(idx)
        return replace(self, graphs=tuple(self.graphs[i] for i in idx), labels=self.labels[idx])

    def content_hash(self) -> str:
        """Digest of structure, features and labels; keys the Gram cache."""
        h = hashlib.sha256()
        h.update(f"{self.feature_mode}|{len(self.graphs)}|".encode())
        for g, y in zip(self.graphs, self.labels):
            h.update(f"{g.node_count}:{int(y)}:".encode())
            for nbrs in g.adjacency:
                h.update(",".join(map(str, nbrs)).encode() + b";")
            h.update(np.ascontiguousarray(g.features, dtype="<f8").tobytes())
        return h.hexdigest()


def _ints(line: str, lineno: int) -> list[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise ParseError(f"non-integer token in {line.strip()!r}", lineno) from None


def parse_dataset(path, name: str | None = None) -> LabeledDataset:
    """Read a dataset file. Labels are remapped to 0..K-1 in order of first appearance."""
    path = Path(path)
    text = path.read_text()
    return parse_text(text, name=name or path.stem)


def parse_text(text: str, name: str = "") -> LabeledDataset:
    lines = text.splitlines()
    pos = 0

    def next_line() -> tuple[list[int], int]:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ParseError("unexpected end of file", len(lines) + 1)
        pos += 1
        return _ints(lines[pos - 1], pos), pos

    header, ln = next_line()
    if len(header) != 1 or header[0] < 0:
        raise ParseError("first line must hold the graph count", ln)
    graphs, raw_labels = [], []
    for _ in range(header[0]):
        head, ln = next_line()
        if len(head) != 2 or head[0] < 1:
            raise ParseError("graph header must be 'node_count label'", ln)
        n, y = head
        tags, nbrs, where = [], [], []
        for u in range(n):
            row, ln = next_line()
            if len(row) < 2 or row[1] < 0 or len(row) != 2 + row[1]:
                raise ParseError("node line must be 'tag k v_1 .. v_k'", ln)
            tags.append(row[0])
            vs = set()
            for v in row[2:]:
                if not 0 <= v < n:
                    raise ParseError(f"neighbour index {v} out of range [0, {n})", ln)
                if v == u:
                    raise ParseError(f"self loop at node {u}", ln)
                vs.add(v)
            nbrs.append(vs)
            where.append(ln)
        for u in range(n):
            for v in nbrs[u]:
                if u not in nbrs[v]:
                    raise ParseError(f"edge {u}->{v} has no reverse edge", where[u])
        adj = tuple(tuple(sorted(s)) for s in nbrs)
        graphs.append(Graph(adj, np.zeros((n, 0)), tuple(tags)))
        raw_labels.append(y)
    for rest in lines[pos:]:
        if rest.strip():
            raise ParseError("trailing content after last graph", lines.index(rest, pos) + 1)

    label_values: list[int] = []
    mapping: dict[int, int] = {}
    for y in raw_labels:
        if y not in mapping:
            mapping[y] = len(mapping)
            label_values.append(y)
    labels = [mapping[y] for y in raw_labels]
    return LabeledDataset(tuple(graphs), np.array(labels, dtype=np.int64), max(len(mapping), 1),
                          "raw", name, tuple(label_values))


def serialize_dataset(ds: LabeledDataset) -> str:
    """Inverse of :func:`parse_text` (labels written as their original values)."""
    values = ds.label_values or tuple(range(ds.num_classes))
    out = [str(len(ds))]
    for g, y in zip(ds.graphs, ds.labels):
        out.append(f"{g.node_count} {values[y]}")
        tags = g.tags if g.tags is not None else (0,) * g.node_count
        for t, nbrs in zip(tags, g.adjacency):
            out.append(" ".join(map(str, [t, len(nbrs), *nbrs])))
    return "\n".join(out) + "\n"


def featurize(ds: LabeledDataset, mode: str) -> LabeledDataset:
    """One-hot node features over dataset-global tag set (``tags``) or degree range (``degrees``)."""
    if mode == "tags":
        if any(g.tags is None for g in ds.graphs):
            raise ValueError("mode 'tags' needs node tags on every graph")
        vocab = sorted({t for g in ds.graphs for t in g.tags})
        index = {t: i for i, t in enumerate(vocab)}
        codes = [np.array([index[t] for t in g.tags]) for g in ds.graphs]
        dim = len(vocab)
    elif mode == "degrees":
        codes = [g.degrees() for g in ds.graphs]
        dim = int(max(c.max() for c in codes)) + 1
    else:
        raise ValueError(f"unknown feature mode {mode!r}")
    graphs = []
    for g, c in zip(ds.graphs, codes):
        x = np.zeros((g.node_count, dim))
        x[np.arange(g.node_count), c] = 1.0
        graphs.append(g.with_features(x))
    return replace(ds, graphs=tuple(graphs), feature_mode=mode)


def make_folds(ds_or_labels, k: int, seed: int = 0) -> list[np.ndarray]:
    """Stratified k-fold partition of ``range(n)``.

    Each class is shuffled and dealt round-robin; the dealing position carries over
    between classes so both total and per-class fold sizes differ by at most one.
    """
    labels = np.asarray(ds_or_labels.labels if isinstance(ds_or_labels, LabeledDataset)
                        else ds_or_labels)
    n = len(labels)
    if k < 2:
        raise ValueError("need k >= 2 folds")
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    slot = 0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        rng.shuffle(members)
        for i in members:
            buckets[slot].append(int(i))
            slot = (slot + 1) % k
    return [np.sort(np.array(b, dtype=np.int64)) for b in buckets]
