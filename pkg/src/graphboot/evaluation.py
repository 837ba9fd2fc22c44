"""Embedding quality measures: linear probe, clustering agreement,
neighborhood purity, intra-class compactness, and the weight-bin
homophily profile.

Everything here is deterministic given its seed and implemented directly
over numpy; no fitted state leaves this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .graph import LABEL_UNKNOWN, Labels
from .objective import SupportScores

L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1)


def _label_values(labels) -> np.ndarray:
    if isinstance(labels, Labels):
        return labels.values
    return np.asarray(labels, dtype=np.int64)


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


@dataclass
class EvalReport:
    split_seed: int
    accuracy: float
    nmi: float
    homogeneity: float
    s_at_k: dict[int, float]
    compactness: float

    def rows(self) -> list[tuple[str, int, float]]:
        out = [("accuracy", self.split_seed, self.accuracy),
               ("nmi", self.split_seed, self.nmi),
               ("homogeneity", self.split_seed, self.homogeneity)]
        for k in sorted(self.s_at_k):
            out.append((f"s_at_{k}", self.split_seed, self.s_at_k[k]))
        out.append(("compactness", self.split_seed, self.compactness))
        return out


def random_splits(labels, ratios: tuple[float, float, float] = (0.1, 0.1, 0.8),
                  seed: int = 0) -> Split:
    """Unstratified uniform split of the labeled nodes.

    Sizes are floor(n * r_train) and floor(n * r_val); the rest is test.
    Every part must end up non-empty.
    """
    y = _label_values(labels)
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ConfigError(f"split ratios {ratios} do not sum to 1")
    idx = np.flatnonzero(y != LABEL_UNKNOWN)
    n = len(idx)
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"too few labeled nodes ({n}) for non-empty splits at ratios {ratios}")
    rng = np.random.default_rng(seed)
    perm = idx[rng.permutation(n)]
    return Split(perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])


def _softmax_rows(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def fit_logistic(X: np.ndarray, y: np.ndarray, n_classes: int, l2: float,
                 max_iter: int = 1000, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial logistic regression by full-batch gradient descent.

    Minimizes mean cross-entropy plus (l2/2)||W||^2; the intercept is not
    regularized. The step size 1/L uses the softmax cross-entropy
    Lipschitz bound L = sigma_max([X, 1])^2 / (2n) + l2 over the
    intercept-augmented data, so descent is monotone without tuning.
    Stops when the gradient norm drops below tol.
    """
    n, d = X.shape
    W = np.zeros((d, n_classes))
    b = np.zeros((1, n_classes))
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    aug = np.concatenate((X, np.ones((n, 1))), axis=1)
    sigma_sq = float(np.linalg.eigvalsh(aug.T @ aug).max())
    lip = sigma_sq / (2.0 * n) + l2 + 1e-12
    step = 1.0 / lip
    for _ in range(max_iter):
        P = _softmax_rows(X @ W + b)
        R = (P - onehot) / n
        gW = X.T @ R + l2 * W
        gb = R.sum(axis=0, keepdims=True)
        gnorm = math.sqrt(float(np.sum(gW * gW)) + float(np.sum(gb * gb)))
        if gnorm <= tol:
            break
        W -= step * gW
        b -= step * gb
    return W, b


def predict_logistic(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.argmax(X @ W + b, axis=1)


def linear_probe(H: np.ndarray, labels, split: Split, l2=L2_GRID) -> float:
    """Test accuracy of a logistic probe, with the L2 strength picked on
    the validation part from the given grid (a bare float is a one-point
    grid). Every class that appears in the split must appear in train."""
    y = _label_values(labels)
    grid = (l2,) if isinstance(l2, float) else tuple(l2)
    all_idx = np.concatenate((split.train, split.val, split.test))
    classes = np.unique(y[all_idx])
    missing = np.setdiff1d(classes, np.unique(y[split.train]))
    if len(missing):
        raise DataError(f"class {int(missing[0])} absent from the train split")
    n_classes = int(y[all_idx].max()) + 1
    best_acc, best_model = -1.0, None
    for strength in grid:
        W, b = fit_logistic(H[split.train], y[split.train], n_classes, strength)
        val_acc = float(np.mean(predict_logistic(W, b, H[split.val]) == y[split.val]))
        if val_acc > best_acc:
            best_acc, best_model = val_acc, (W, b)
    W, b = best_model
    return float(np.mean(predict_logistic(W, b, H[split.test]) == y[split.test]))


def _kmeans_once(H: np.ndarray, k: int, rng: np.random.Generator,
                 max_iter: int) -> tuple[np.ndarray, float]:
    n = H.shape[0]
    sq = np.sum(H * H, axis=1)

    def dist_to(centers):
        return np.maximum(sq[:, None] - 2.0 * H @ centers.T
                          + np.sum(centers * centers, axis=1)[None, :], 0.0)

    # k-means++ seeding
    centers = np.empty((k, H.shape[1]))
    centers[0] = H[rng.integers(n)]
    d2 = dist_to(centers[:1]).ravel()
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            centers[c] = H[rng.choice(n, p=d2 / total)]
        else:
            centers[c] = H[rng.integers(n)]
        d2 = np.minimum(d2, dist_to(centers[c:c + 1]).ravel())

    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        D = dist_to(centers)
        new_assign = np.argmin(D, axis=1)
        for c in range(k):
            members = new_assign == c
            if members.any():
                centers[c] = H[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the farthest point
                far = int(np.argmax(D[np.arange(n), new_assign]))
                centers[c] = H[far]
                new_assign[far] = c
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    inertia = float(dist_to(centers)[np.arange(n), assign].sum())
    return assign, inertia


def kmeans(H: np.ndarray, k: int, seed: int = 0, n_init: int = 10,
           max_iter: int = 300) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best inertia over n_init
    seeded restarts. Returns the cluster assignment per row."""
    H = np.asarray(H, dtype=np.float64)
    if not (1 <= k <= H.shape[0]):
        raise DataError(f"k={k} outside [1, {H.shape[0]}]")
    root = np.random.default_rng(seed)
    best_assign, best_inertia = None, np.inf
    for child in root.spawn(n_init):
        assign, inertia = _kmeans_once(H, k, child, max_iter)
        if inertia < best_inertia:
            best_assign, best_inertia = assign, inertia
    return best_assign


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((len(ua), len(ub)))
    np.add.at(table, (ia, ib), 1.0)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(labels, assignments) -> float:
    """2 I(Y; C) / (H(Y) + H(C)) with natural logs; 1.0 when both sides
    are constant (0/0 read as perfect agreement)."""
    y = _label_values(labels)
    c = _label_values(assignments)
    if len(y) != len(c):
        raise ValueError(f"{len(y)} labels vs {len(c)} assignments")
    table = _contingency(y, c)
    n = table.sum()
    hy = _entropy(table.sum(axis=1))
    hc = _entropy(table.sum(axis=0))
    if hy == 0.0 and hc == 0.0:
        return 1.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    mask = pij > 0
    mi = float(np.sum(pij[mask] * np.log(pij[mask] / outer[mask])))
    return 2.0 * mi / (hy + hc)


def homogeneity(labels, assignments) -> float:
    """1 - H(Y | C) / H(Y); each cluster should hold a single class.

    Undefined (raises) when the labels are constant.
    """
    y = _label_values(labels)
    c = _label_values(assignments)
    if len(y) != len(c):
        raise ValueError(f"{len(y)} labels vs {len(c)} assignments")
    table = _contingency(y, c)
    n = table.sum()
    hy = _entropy(table.sum(axis=1))
    if hy == 0.0:
        raise DataError("homogeneity is undefined for constant labels")
    h_cond = 0.0
    for j in range(table.shape[1]):
        col = table[:, j]
        if col.sum() > 0:
            h_cond += (col.sum() / n) * _entropy(col)
    return 1.0 - h_cond / hy


def _normalize_rows(H: np.ndarray) -> np.ndarray:
    nrm = np.maximum(np.linalg.norm(H, axis=1, keepdims=True), 1e-12)
    return H / nrm


def s_at_k(H: np.ndarray, labels, k: int) -> float:
    """Fraction of the k cosine-nearest neighbors (self excluded) sharing
    the query's label, averaged over nodes. Ties break toward the lower
    node index."""
    y = _label_values(labels)
    H = np.asarray(H, dtype=np.float64)
    n = H.shape[0]
    if len(y) != n:
        raise ValueError(f"{len(y)} labels for {n} embeddings")
    if not (1 <= k < n):
        raise DataError(f"k={k} outside [1, {n})")
    Hn = _normalize_rows(H)
    hits = 0
    chunk = max(1, min(n, 8_000_000 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sims = Hn[start:stop] @ Hn.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # stable sort on -sim keeps ascending index order among ties
        order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
        hits += int(np.sum(y[order] == y[start:stop][:, None]))
    return hits / (n * k)


def compactness(H: np.ndarray, labels, paper_literal: bool = False) -> float:
    """Macro-averaged mean pairwise cosine within each class.

    Per class, distinct ordered pairs are summed; the default divides by
    the pair count m(m-1), while paper_literal divides by the class size
    m. Classes need at least two members.
    """
    y = _label_values(labels)
    H = np.asarray(H, dtype=np.float64)
    if len(y) != H.shape[0]:
        raise ValueError(f"{len(y)} labels for {H.shape[0]} embeddings")
    known = y[y != LABEL_UNKNOWN]
    classes = np.unique(known)
    if len(classes) == 0:
        raise DataError("compactness needs at least one labeled class")
    Hn = _normalize_rows(H)
    total = 0.0
    for cls in classes:
        members = np.flatnonzero(y == cls)
        m = len(members)
        if m < 2:
            raise DataError(f"class {int(cls)} has a single member; compactness undefined")
        G = Hn[members] @ Hn[members].T
        pair_sum = float(G.sum() - np.trace(G))
        denom = m if paper_literal else m * (m - 1)
        total += pair_sum / denom
    return total / len(classes)


def weight_homophily_profile(scores: SupportScores, labels, n_bins: int = 4,
                             by: str = "weight") -> tuple[np.ndarray, np.ndarray]:
    """Sort scored (anchor, neighbor) pairs ascending by weight or by raw
    cosine, cut them into n_bins equal-size bins, and return each bin's
    intra-class fraction along with the bin sizes."""
    if by not in ("weight", "cosine"):
        raise ConfigError(f"profile key must be 'weight' or 'cosine', got {by!r}")
    if n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {n_bins}")
    y = _label_values(labels)
    src, dst = scores.pairs()
    if scores.n_pairs == 0:
        raise DataError("no scored pairs to profile")
    if scores.n_pairs < n_bins:
        raise DataError(f"{scores.n_pairs} pairs cannot fill {n_bins} bins")
    key = scores.weights if by == "weight" else scores.cosines
    order = np.argsort(key, kind="stable")
    intra = (y[src] == y[dst])[order].astype(np.float64)
    fractions = np.array([chunk.mean() for chunk in np.array_split(intra, n_bins)])
    sizes = np.array([len(chunk) for chunk in np.array_split(intra, n_bins)])
    return fractions, sizes


def evaluate_embeddings(H: np.ndarray, labels: Labels, split_seed: int,
                        ks: tuple[int, ...] = (5, 10)) -> EvalReport:
    """Full report for one split seed; the same seed drives the split and
    the k-means restarts (clusters = number of classes)."""
    split = random_splits(labels, seed=split_seed)
    acc = linear_probe(H, labels, split)
    assign = kmeans(H, labels.n_classes, seed=split_seed)
    return EvalReport(
        split_seed=split_seed,
        accuracy=acc,
        nmi=nmi(labels, assign),
        homogeneity=homogeneity(labels, assign),
        s_at_k={k: s_at_k(H, labels, k) for k in ks},
        compactness=compactness(H, labels),
    )
