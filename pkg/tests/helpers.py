"""Shared test utilities: small graph builders, independent metric oracles,
and a gradient checker that separates resolvable entries from entries whose
true gradient is identically zero.
"""

from __future__ import annotations

import numpy as np

from graphboot import autodiff as ad
from graphboot.graph import Labels, SparseGraph, from_undirected_pairs


def path_graph(n: int = 3, n_features: int = 2) -> SparseGraph:
    """Path 0-1-2-...-(n-1) with one-hot-ish features."""
    pairs = np.column_stack((np.arange(n - 1), np.arange(1, n)))
    features = np.eye(n, n_features)
    return from_undirected_pairs(n, pairs, features)


def triangle_graph(n_features: int = 2) -> SparseGraph:
    pairs = np.array([[0, 1], [1, 2], [0, 2]])
    return from_undirected_pairs(3, pairs, np.ones((3, n_features)))


def complete_graph(n: int, n_features: int = 2) -> SparseGraph:
    iu, ju = np.triu_indices(n, k=1)
    return from_undirected_pairs(n, np.column_stack((iu, ju)), np.ones((n, n_features)))


def random_graph(n: int, p: float, n_features: int,
                 rng: np.random.Generator) -> SparseGraph:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    features = rng.normal(size=(n, n_features))
    return from_undirected_pairs(n, np.column_stack((iu[keep], ju[keep])), features)


def labels_of(values, n_classes: int) -> Labels:
    return Labels(np.asarray(values, dtype=np.int64), n_classes)


# ---------------------------------------------------------------- oracles


def entropy_of(counts: np.ndarray) -> float:
    """Shannon entropy (natural log) of a count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi_from_table(table: np.ndarray) -> float:
    """NMI computed directly from a contingency table.

    Independent of the library implementation: marginals, entropies and
    mutual information are assembled cell by cell.
    """
    table = np.asarray(table, dtype=np.float64)
    n = table.sum()
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    hy = entropy_of(row)
    hc = entropy_of(col)
    if hy == 0.0 and hc == 0.0:
        return 1.0
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j] > 0:
                pij = table[i, j] / n
                mi += pij * np.log(pij / ((row[i] / n) * (col[j] / n)))
    return 2.0 * mi / (hy + hc)


def homogeneity_from_table(table: np.ndarray) -> float:
    """1 - H(class | cluster) / H(class), straight from the table."""
    table = np.asarray(table, dtype=np.float64)
    n = table.sum()
    hy = entropy_of(table.sum(axis=1))
    h_cond = 0.0
    for j in range(table.shape[1]):
        col = table[:, j]
        if col.sum() > 0:
            h_cond += (col.sum() / n) * entropy_of(col)
    return 1.0 - h_cond / hy


def labeling_from_table(table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Realize (labels, assignments) whose contingency table is `table`."""
    ys, cs = [], []
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            ys.extend([i] * int(table[i, j]))
            cs.extend([j] * int(table[i, j]))
    return np.array(ys, dtype=np.int64), np.array(cs, dtype=np.int64)


def brute_force_s_at_k(H: np.ndarray, y: np.ndarray, k: int) -> float:
    """Double-loop S@k with the same tie rule: higher cosine first, then
    lower node index."""
    Hn = H / np.maximum(np.linalg.norm(H, axis=1, keepdims=True), 1e-12)
    n = len(y)
    hits = 0
    for i in range(n):
        sims = [(-float(Hn[i] @ Hn[j]), j) for j in range(n) if j != i]
        sims.sort()
        for _, j in sims[:k]:
            hits += int(y[j] == y[i])
    return hits / (n * k)


def brute_force_compactness(H: np.ndarray, y: np.ndarray,
                            paper_literal: bool = False) -> float:
    Hn = H / np.maximum(np.linalg.norm(H, axis=1, keepdims=True), 1e-12)
    total = 0.0
    classes = np.unique(y[y >= 0])
    for cls in classes:
        members = np.flatnonzero(y == cls)
        m = len(members)
        pair_sum = 0.0
        for a in members:
            for b in members:
                if a != b:
                    pair_sum += float(Hn[a] @ Hn[b])
        total += pair_sum / (m if paper_literal else m * (m - 1))
    return total / len(classes)


# ------------------------------------------------------- gradient checking


def split_grad_check(f, named_params, dead_names=(), h: float = 1e-5):
    """Central-difference comparison, split by gradient resolvability.

    For parameters not listed in dead_names, returns the worst per-entry
    relative error |a - n| / (|a| + |n| + 1e-12). Parameters in dead_names
    are expected to have an identically zero true gradient (the loss does
    not depend on them); for those the analytic and numeric values are
    each compared against zero instead, since a relative error between two
    noise-level numbers carries no information.

    Returns (live_worst_rel, dead_analytic_max, dead_numeric_max).
    """
    with ad.Tape():
        out = f()
    grads = ad.backward(out)
    live_worst = 0.0
    dead_analytic = 0.0
    dead_numeric = 0.0
    for name, p in named_params:
        analytic = grads.get(p)
        if analytic is None:
            analytic = np.zeros(p.shape)
        dead = name in dead_names
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p.data[idx]
            p.data[idx] = orig + h
            fp = f().item()
            p.data[idx] = orig - h
            fm = f().item()
            p.data[idx] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic[idx]
            if dead:
                dead_analytic = max(dead_analytic, abs(a))
                dead_numeric = max(dead_numeric, abs(numeric))
            else:
                rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
                live_worst = max(live_worst, rel)
    return live_worst, dead_analytic, dead_numeric
