"""Undirected graphs in CSR form: on-disk format, adjacency normalization,
edge homophily, and neighbor access.

A graph directory holds meta.json, edges.tsv, features.csv and optionally
labels.txt. Edges are stored once per undirected edge on disk and twice
(both directed slots) in memory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError

LABEL_UNKNOWN = -1


class CsrMatrix:
    """Sparse float64 matrix in compressed-sparse-row layout.

    Column indices are sorted within each row. Dense right-multiplication
    is the only heavy operation; it is vectorized via segment sums.
    """

    def __init__(self, n_rows: int, n_cols: int, indptr, indices, data):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        if self.indptr.shape != (self.n_rows + 1,):
            raise ValueError(f"indptr has shape {self.indptr.shape}, expected ({self.n_rows + 1},)")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("indptr does not cover the index array")
        if len(self.indices) != len(self.data):
            raise ValueError("indices and data lengths differ")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= self.n_cols):
            raise ValueError("column index out of range")
        self._transpose: CsrMatrix | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.data)

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "CsrMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        counts = np.bincount(rows, minlength=n_rows)
        indptr = np.concatenate(([0], np.cumsum(counts)))
        return cls(n_rows, n_cols, indptr, cols, vals)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        r = np.arange(n + 1, dtype=np.int64)
        return cls(n, n, r, np.arange(n, dtype=np.int64), np.ones(n))

    def __matmul__(self, dense: np.ndarray) -> np.ndarray:
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.n_cols:
            raise ValueError(f"cannot multiply {self.shape} sparse by {dense.shape} dense")
        out = np.zeros((self.n_rows, dense.shape[1]))
        if self.nnz == 0:
            return out
        products = self.data[:, None] * dense[self.indices]
        # reduceat mishandles empty segments, so reduce over non-empty rows only
        nonempty = np.flatnonzero(np.diff(self.indptr) > 0)
        out[nonempty] = np.add.reduceat(products, self.indptr[nonempty], axis=0)
        return out

    def transpose(self) -> "CsrMatrix":
        if self._transpose is None:
            rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))
            self._transpose = CsrMatrix.from_coo(self.n_cols, self.n_rows, self.indices, rows, self.data)
        return self._transpose

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out


@dataclass
class SparseGraph:
    """Undirected unweighted graph with dense float64 node features.

    row_ptr/col_idx store every edge in both directions, columns sorted
    within each row, no self-loops, no duplicates. n_edges counts directed
    slots, i.e. twice the number of undirected edges.
    """

    n_nodes: int
    n_edges: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(self.col_idx, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape[0] != self.n_nodes:
            raise DataError(
                f"feature matrix has {self.features.shape[0]} rows for {self.n_nodes} nodes")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_undirected_edges(self) -> int:
        return self.n_edges // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def directed_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Every stored slot, as (source, destination) index arrays."""
        src = np.repeat(np.arange(self.n_nodes, dtype=np.int64), self.degrees())
        return src, self.col_idx

    def undirected_pairs(self) -> np.ndarray:
        """One (i, j) row per undirected edge with i < j."""
        src, dst = self.directed_pairs()
        keep = src < dst
        return np.column_stack((src[keep], dst[keep]))


@dataclass
class Labels:
    """Integer class labels per node; LABEL_UNKNOWN marks unlabeled nodes."""

    values: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.n_classes < 1:
            raise DataError("labels require n_classes >= 1")
        known = self.values[self.values != LABEL_UNKNOWN]
        if len(known) and (known.min() < 0 or known.max() >= self.n_classes):
            raise DataError(
                f"label out of range: found {int(known.max() if known.max() >= self.n_classes else known.min())}"
                f" with n_classes={self.n_classes}")

    @property
    def known_mask(self) -> np.ndarray:
        return self.values != LABEL_UNKNOWN

    def all_known(self) -> bool:
        return bool(np.all(self.known_mask))


class NeighborList:
    """Read-only per-node neighbor sets over a graph's CSR arrays."""

    def __init__(self, row_ptr: np.ndarray, col_idx: np.ndarray):
        self.row_ptr = row_ptr
        self.col_idx = col_idx
        self.n = len(row_ptr) - 1

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All (anchor, neighbor) pairs as flat index arrays."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.counts)
        return src, self.col_idx


def neighbor_list(g: SparseGraph) -> NeighborList:
    return NeighborList(g.row_ptr, g.col_idx)


def from_undirected_pairs(n_nodes: int, pairs: np.ndarray, features: np.ndarray) -> SparseGraph:
    """Build a SparseGraph from an (m, 2) array of undirected edges.

    Self-loops are dropped, duplicates (in either orientation) collapse to
    a single undirected edge, and both directed slots are materialized.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs):
        if pairs.min() < 0 or pairs.max() >= n_nodes:
            raise DataError(
                f"edge endpoint out of range [0, {n_nodes}): found {int(pairs.min())}..{int(pairs.max())}")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs):
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        pairs = np.unique(np.column_stack((lo, hi)), axis=0)
        rows = np.concatenate((pairs[:, 0], pairs[:, 1]))
        cols = np.concatenate((pairs[:, 1], pairs[:, 0]))
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    counts = np.bincount(rows, minlength=n_nodes)
    row_ptr = np.concatenate(([0], np.cumsum(counts)))
    return SparseGraph(n_nodes, len(cols), row_ptr, cols, np.asarray(features, dtype=np.float64))


def _parse_int(token: str, path: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: expected an integer, got {token!r}") from None


def _repr_float(v: float) -> str:
    """Shortest decimal string that round-trips the exact double."""
    return repr(float(v))


def load_graph(path: str) -> tuple[SparseGraph, Labels | None]:
    """Load a graph directory; returns the graph and labels when present."""
    meta_path = os.path.join(path, "meta.json")
    if not os.path.isdir(path):
        raise DataError(f"not a graph directory: {path}")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise DataError(f"missing {meta_path}") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{meta_path}: invalid JSON ({e})") from None

    for key in ("n_nodes", "n_features", "n_classes"):
        if key not in meta or not isinstance(meta[key], int):
            raise DataError(f"{meta_path}: missing or non-integer field {key!r}")
    n_nodes, n_features, n_classes = meta["n_nodes"], meta["n_features"], meta["n_classes"]
    if n_nodes < 1 or n_features < 1 or n_classes < 0:
        raise DataError(f"{meta_path}: need n_nodes >= 1, n_features >= 1, n_classes >= 0")

    edges_path = os.path.join(path, "edges.tsv")
    pair_list = []
    try:
        with open(edges_path) as f:
            for lineno, line in enumerate(f, start=1):
                tokens = line.split()
                if not tokens:
                    continue
                if len(tokens) != 2:
                    raise ParseError(f"{edges_path}:{lineno}: expected two endpoints, got {len(tokens)}")
                i = _parse_int(tokens[0], edges_path, lineno)
                j = _parse_int(tokens[1], edges_path, lineno)
                if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                    raise DataError(f"{edges_path}:{lineno}: endpoint out of range [0, {n_nodes})")
                pair_list.append((i, j))
    except FileNotFoundError:
        raise DataError(f"missing {edges_path}") from None
    pairs = np.array(pair_list, dtype=np.int64).reshape(-1, 2)

    feat_path = os.path.join(path, "features.csv")
    rows = []
    try:
        with open(feat_path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                tokens = line.strip().split(",")
                if len(tokens) != n_features:
                    raise ParseError(
                        f"{feat_path}:{lineno}: expected {n_features} values, got {len(tokens)}")
                try:
                    rows.append([float(t) for t in tokens])
                except ValueError:
                    raise ParseError(f"{feat_path}:{lineno}: non-numeric feature value") from None
    except FileNotFoundError:
        raise DataError(f"missing {feat_path}") from None
    if len(rows) != n_nodes:
        raise DataError(f"{feat_path}: {len(rows)} rows for {n_nodes} nodes")
    features = np.array(rows, dtype=np.float64)

    labels = None
    label_path = os.path.join(path, "labels.txt")
    if os.path.exists(label_path):
        if n_classes < 1:
            raise DataError(f"{label_path} present but meta declares n_classes={n_classes}")
        vals = []
        with open(label_path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                vals.append(_parse_int(line.strip(), label_path, lineno))
        if len(vals) != n_nodes:
            raise DataError(f"{label_path}: {len(vals)} labels for {n_nodes} nodes")
        labels = Labels(np.array(vals, dtype=np.int64), n_classes)

    g = from_undirected_pairs(n_nodes, pairs, features)
    return g, labels


def save_graph(path: str, g: SparseGraph, labels: Labels | None = None) -> None:
    """Write a graph directory; the inverse of load_graph."""
    os.makedirs(path, exist_ok=True)
    meta = {
        "n_nodes": g.n_nodes,
        "n_features": g.n_features,
        "n_classes": labels.n_classes if labels is not None else 0,
    }
    with open(os.path.join(path, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    with open(os.path.join(path, "edges.tsv"), "w") as f:
        for i, j in g.undirected_pairs():
            f.write(f"{i}\t{j}\n")
    with open(os.path.join(path, "features.csv"), "w") as f:
        for row in g.features:
            f.write(",".join(_repr_float(v) for v in row) + "\n")
    if labels is not None:
        with open(os.path.join(path, "labels.txt"), "w") as f:
            for v in labels.values:
                f.write(f"{int(v)}\n")


def normalize_adjacency(g: SparseGraph) -> CsrMatrix:
    """Symmetrically normalized adjacency with self-loops.

    Entry (i, j) is 1/sqrt((d_i + 1)(d_j + 1)) for each edge and each
    self-loop, where d is the degree without the loop. An isolated node's
    row is exactly [1.0] at the diagonal.
    """
    deg = g.degrees()
    src, dst = g.directed_pairs()
    rows = np.concatenate((src, np.arange(g.n_nodes, dtype=np.int64)))
    cols = np.concatenate((dst, np.arange(g.n_nodes, dtype=np.int64)))
    inv_sqrt = 1.0 / np.sqrt(deg + 1.0)
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    return CsrMatrix.from_coo(g.n_nodes, g.n_nodes, rows, cols, vals)


def edge_homophily(g: SparseGraph, labels: Labels) -> float:
    """Fraction of edges joining same-class endpoints.

    Counted over directed slots, which equals the undirected fraction.
    Requires at least one edge and a label on every node.
    """
    if g.n_edges == 0:
        raise DataError("homophily is undefined on a graph with no edges")
    if len(labels.values) != g.n_nodes:
        raise DataError(f"{len(labels.values)} labels for {g.n_nodes} nodes")
    if not labels.all_known():
        raise DataError("homophily requires a label on every node")
    src, dst = g.directed_pairs()
    y = labels.values
    return float(np.mean(y[src] == y[dst]))
