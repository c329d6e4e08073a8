"""Graph container, file formats, splits and a two-block SBM generator.

Adjacency is kept dense (n x n float64). Budgets elsewhere are counted in
undirected edges, while :func:`graph_distance` reports the entry-wise 1,1-norm,
so one flipped edge counts 2.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ContractError,
    DuplicateNodeError,
    EmptyGraphError,
    NodeIndexError,
    ParseError,
    SelfLoopError,
    ShapeError,
)

ROLES = ("train", "val", "test")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ROLES:
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64))

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0), np.empty(0))

    def is_empty(self):
        return len(self.train) + len(self.val) + len(self.test) == 0

    def is_partition_of(self, n):
        allidx = np.concatenate([self.train, self.val, self.test])
        return len(allidx) == n and np.array_equal(np.sort(allidx), np.arange(n))


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph with binary sensitive attribute.

    All arrays are copied and made read-only on construction; use
    :meth:`with_adjacency` / :meth:`with_features` to derive modified graphs.
    """

    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    split: Split = field(default_factory=Split.empty)

    def __post_init__(self):
        A = _frozen(self.adjacency, np.float64)
        X = _frozen(self.features, np.float64)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1), np.float64)
        y = _frozen(self.labels, np.int64)
        s = _frozen(self.sensitive, np.int64)
        n = A.shape[0]
        if A.ndim != 2 or A.shape != (n, n):
            raise ShapeError(f"adjacency must be square, got {A.shape}")
        if X.shape[0] != n or y.shape != (n,) or s.shape != (n,):
            raise ShapeError("features, labels and sensitive must have n rows")
        if n and (A.min() < 0 or A.max() > 1):
            raise ContractError("adjacency entries must lie in [0, 1]")
        if not np.array_equal(A, A.T):
            raise ContractError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise SelfLoopError("adjacency diagonal must be zero")
        if n and (y.min() < 0):
            raise ContractError("labels must be non-negative")
        if n and not np.all((s == 0) | (s == 1)):
            raise ContractError("sensitive attribute must be 0/1")
        if not self.split.is_empty() and not self.split.is_partition_of(n):
            raise ContractError("split must partition the node set")
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "sensitive", s)

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if self.n else 0

    def n_edges(self):
        """Undirected edge count (sum of the strict upper triangle)."""
        return float(np.triu(self.adjacency, 1).sum())

    def is_binary(self):
        return bool(np.all((self.adjacency == 0) | (self.adjacency == 1)))

    def with_adjacency(self, A):
        return dataclasses.replace(self, adjacency=A)

    def with_features(self, X):
        return dataclasses.replace(self, features=X)

    def with_split(self, split):
        return dataclasses.replace(self, split=split)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.5, 0.25, 0.25)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ContractError("split fractions must be three non-negative reals")
        if abs(sum(self.fractions) - 1.0) > 1e-12:
            raise ContractError(f"split fractions sum to {sum(self.fractions)}, not 1")
        if self.seed < 0:
            raise ContractError("split seed must be unsigned")


@dataclass(frozen=True)
class SbmConfig:
    nodes_per_block: int = 100
    p_in: float = 0.2
    p_out: float = 0.02
    n_features: int = 16
    signal: float = 0.5
    label_corr: float = 0.8
    seed: int = 0

    def __post_init__(self):
        for name in ("p_in", "p_out", "label_corr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name}={v} is not a probability")
        if self.nodes_per_block < 1:
            raise ContractError("nodes_per_block must be >= 1")
        if self.n_features < 1:
            raise ContractError("n_features must be >= 1")
        if self.signal < 0:
            raise ContractError("signal must be non-negative")


def generate_split(graph, spec):
    n = graph.n
    if n == 0:
        raise EmptyGraphError("cannot split an empty graph")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = math.floor(spec.fractions[0] * n)
    n_val = math.floor(spec.fractions[1] * n)
    split = Split(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
    )
    return graph.with_split(split)


def generate_sbm(config):
    """Two-block SBM; block id is the sensitive attribute.

    Labels agree with the block with probability ``label_corr``. Features are
    ``signal * (2*label - 1) + N(0, 1)`` in every dimension.
    """
    rng = np.random.default_rng(config.seed)
    m = config.nodes_per_block
    n = 2 * m
    s = np.repeat([0, 1], m)
    probs = np.where(s[:, None] == s[None, :], config.p_in, config.p_out)
    draws = rng.random((n, n))
    upper = np.triu(draws < probs, 1).astype(np.float64)
    A = upper + upper.T
    agree = rng.random(n) < config.label_corr
    y = np.where(agree, s, 1 - s)
    X = config.signal * (2.0 * y[:, None] - 1.0) + rng.standard_normal((n, config.n_features))
    return Graph(A, X, y, s)


def graph_distance(g1, g2):
    A1 = g1.adjacency if isinstance(g1, Graph) else np.asarray(g1)
    A2 = g2.adjacency if isinstance(g2, Graph) else np.asarray(g2)
    if A1.shape != A2.shape:
        raise ShapeError(f"shape mismatch {A1.shape} vs {A2.shape}")
    return float(np.abs(A1 - A2).sum())


# --- file formats -----------------------------------------------------------

def graph_paths(prefix):
    prefix = str(prefix)
    return Path(prefix + ".edges"), Path(prefix + ".nodes.csv"), Path(prefix + ".split.csv")


def _read_nodes(node_path):
    with open(node_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "label", "sensitive"]:
            raise ParseError(node_path, 1, "expected header 'id,label,sensitive,f0,...'")
        d = len(header) - 3
        if header[3:] != [f"f{k}" for k in range(d)]:
            raise ParseError(node_path, 1, "feature columns must be f0..f{d-1}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 3:
                raise ParseError(node_path, lineno, f"expected {d + 3} fields, got {len(row)}")
            try:
                rows.append((lineno, int(row[0]), int(row[1]), int(row[2]), [float(v) for v in row[3:]]))
            except ValueError as exc:
                raise ParseError(node_path, lineno, str(exc)) from None
    n = len(rows)
    X = np.zeros((n, d))
    y = np.zeros(n, dtype=np.int64)
    s = np.zeros(n, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for lineno, i, label, sens, feats in rows:
        if not 0 <= i < n:
            raise NodeIndexError(f"{node_path}:{lineno}: node id {i} out of range [0, {n})")
        if seen[i]:
            raise DuplicateNodeError(node_path, lineno, f"duplicate node id {i}")
        seen[i] = True
        y[i], s[i], X[i] = label, sens, feats
    return X, y, s


def load_graph(edge_path, node_path):
    X, y, s = _read_nodes(node_path)
    n = len(y)
    A = np.zeros((n, n))
    with open(edge_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError(edge_path, lineno, f"expected 2 integers, got {line.strip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(edge_path, lineno, f"non-integer endpoint in {line.strip()!r}") from None
            if not (0 <= u < n and 0 <= v < n):
                raise NodeIndexError(f"{edge_path}:{lineno}: edge ({u}, {v}) out of range [0, {n})")
            if u == v:
                raise SelfLoopError(f"{edge_path}:{lineno}: self-loop on node {u}")
            A[u, v] = A[v, u] = 1.0
    return Graph(A, X, y, s)


def load_split(graph, split_path):
    roles = {r: [] for r in ROLES}
    with open(split_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["id", "role"]:
            raise ParseError(split_path, 1, "expected header 'id,role'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or row[1] not in roles:
                raise ParseError(split_path, lineno, f"bad split row {row!r}")
            try:
                i = int(row[0])
            except ValueError:
                raise ParseError(split_path, lineno, f"bad node id {row[0]!r}") from None
            if not 0 <= i < graph.n:
                raise NodeIndexError(f"{split_path}:{lineno}: node id {i} out of range")
            roles[row[1]].append(i)
    split = Split(*(np.sort(roles[r]) for r in ROLES))
    if not split.is_partition_of(graph.n):
        raise ContractError(f"{split_path}: split is not a partition of {graph.n} nodes")
    return graph.with_split(split)


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_graph(graph, edge_path, node_path, split_path=None):
    iu, ju = np.nonzero(np.triu(graph.adjacency, 1))
    if not graph.is_binary():
        raise ContractError("edge files hold binary graphs only")
    _atomic_write(edge_path, "".join(f"{u} {v}\n" for u, v in zip(iu, ju)))

    d = graph.n_features
    lines = [",".join(["id", "label", "sensitive"] + [f"f{k}" for k in range(d)])]
    for i in range(graph.n):
        feats = ",".join(repr(float(v)) for v in graph.features[i])
        lines.append(f"{i},{graph.labels[i]},{graph.sensitive[i]},{feats}")
    _atomic_write(node_path, "\n".join(lines) + "\n")

    if split_path is not None:
        role = np.empty(graph.n, dtype=object)
        for r in ROLES:
            role[getattr(graph.split, r)] = r
        _atomic_write(split_path, "id,role\n" + "".join(f"{i},{role[i]}\n" for i in range(graph.n)))
