"""Bootstrapped alignment losses.

The node term pulls each predicted online embedding toward the target
embedding of the same node: -(1/n) sum_i cos(z1_i, h2_i). The neighbor
term additionally pulls it toward the target embeddings of the node's
original-graph neighbors, weighted per anchor. Variants differ only in
how those weights are produced:

  bgrl        no neighbor term
  blnn        softmax over cos(h1_i, h2_j) / tau (supportiveness)
  bgrl_noisy  uniform over all neighbors
  bgrl_clean  uniform over same-class neighbors (labels required)

Weights are treated as constants by default: they are computed from
detached representations, so no gradient flows through the scoring path
unless grad_through_scores is set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError
from .graph import Labels, NeighborList

VARIANTS = ("bgrl", "blnn", "bgrl_noisy", "bgrl_clean")


@dataclass
class LossConfig:
    variant: str = "blnn"
    tau: float = 1.0
    symmetric: bool = True
    neighbor_term_weight: float = 1.0
    grad_through_scores: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.neighbor_term_weight < 0:
            raise ConfigError(f"neighbor_term_weight must be >= 0, got {self.neighbor_term_weight}")


class SupportScores:
    """Per-anchor neighbor weights in CSR layout.

    anchor_ptr has n+1 offsets into neighbor_idx/weights/cosines; each
    anchor's weights are non-negative and sum to 1 (empty anchors are
    allowed and contribute nothing). cosines keeps the raw scores the
    weights were derived from, for diagnostics.
    """

    def __init__(self, anchor_ptr: np.ndarray, neighbor_idx: np.ndarray,
                 weights: np.ndarray, cosines: np.ndarray | None = None):
        self.anchor_ptr = np.asarray(anchor_ptr, dtype=np.int64)
        self.neighbor_idx = np.asarray(neighbor_idx, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.cosines = (np.zeros_like(self.weights) if cosines is None
                        else np.asarray(cosines, dtype=np.float64))
        if self.anchor_ptr[0] != 0 or self.anchor_ptr[-1] != len(self.neighbor_idx):
            raise ValueError("anchor_ptr does not cover the neighbor array")
        if len(self.weights) != len(self.neighbor_idx) or len(self.cosines) != len(self.neighbor_idx):
            raise ValueError("weights/cosines length differs from neighbor count")
        if np.any(self.weights < 0):
            raise ValueError("negative supportiveness weight")
        sums = self.anchor_sums()
        occupied = np.diff(self.anchor_ptr) > 0
        if np.any(np.abs(sums[occupied] - 1.0) > 1e-9):
            raise ValueError("per-anchor weights do not sum to 1")

    @property
    def n_anchors(self) -> int:
        return len(self.anchor_ptr) - 1

    @property
    def n_pairs(self) -> int:
        return len(self.neighbor_idx)

    def counts(self) -> np.ndarray:
        return np.diff(self.anchor_ptr)

    def anchor_sums(self) -> np.ndarray:
        sums = np.zeros(self.n_anchors)
        occupied = np.flatnonzero(np.diff(self.anchor_ptr) > 0)
        if self.n_pairs:
            sums[occupied] = np.add.reduceat(self.weights, self.anchor_ptr[occupied])
        return sums

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.n_anchors, dtype=np.int64), self.counts())
        return src, self.neighbor_idx

    def anchor_slice(self, i: int) -> slice:
        return slice(self.anchor_ptr[i], self.anchor_ptr[i + 1])


def _as_array(H) -> np.ndarray:
    return H.data if isinstance(H, Tensor) else np.asarray(H, dtype=np.float64)


def _pair_cosines(A: np.ndarray, B: np.ndarray, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
    u, v = A[ia], B[ib]
    nu = np.maximum(np.linalg.norm(u, axis=1), ad.EPS_NORM)
    nv = np.maximum(np.linalg.norm(v, axis=1), ad.EPS_NORM)
    return np.sum(u * v, axis=1) / (nu * nv)


def supportiveness(H1, H2, nbrs: NeighborList, tau: float) -> SupportScores:
    """Attention weights w_ij = softmax_j(cos(h1_i, h2_j) / tau) over N_i.

    Computed on detached values: the result carries plain arrays and the
    caller treats them as constants. Anchors with no neighbors get an
    empty segment.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    A, B = _as_array(H1), _as_array(H2)
    if A.shape != B.shape:
        raise ValueError(f"representation shape mismatch {A.shape} vs {B.shape}")
    if A.shape[0] != nbrs.n:
        raise ValueError(f"{A.shape[0]} representations for {nbrs.n} nodes")
    src, dst = nbrs.pairs()
    cos = _pair_cosines(A, B, src, dst)
    ptr = np.asarray(nbrs.row_ptr, dtype=np.int64)
    weights = np.empty_like(cos)
    occupied = np.flatnonzero(np.diff(ptr) > 0)
    if len(cos):
        # per-anchor stable softmax at temperature tau
        seg_id = np.repeat(np.arange(nbrs.n), np.diff(ptr))
        mx = np.empty(nbrs.n)
        mx[occupied] = np.maximum.reduceat(cos / tau, ptr[occupied])
        ex = np.exp(cos / tau - mx[seg_id])
        denom = np.empty(nbrs.n)
        denom[occupied] = np.add.reduceat(ex, ptr[occupied])
        weights = ex / denom[seg_id]
    return SupportScores(ptr.copy(), dst.copy(), weights, cos)


def uniform_scores(nbrs: NeighborList) -> SupportScores:
    """w_ij = 1 / |N_i| for every neighbor (the bgrl_noisy weighting)."""
    src, dst = nbrs.pairs()
    counts = nbrs.counts
    weights = np.repeat(np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0), counts)
    return SupportScores(np.asarray(nbrs.row_ptr, dtype=np.int64).copy(), dst.copy(), weights)


def intra_class_scores(nbrs: NeighborList, labels: Labels) -> SupportScores:
    """Uniform weights over same-class neighbors only (bgrl_clean).

    Anchors whose neighborhood holds no same-class node get an empty
    segment. Requires a label on every node.
    """
    if not labels.all_known():
        raise ConfigError("bgrl_clean weighting requires a label on every node")
    if len(labels.values) != nbrs.n:
        raise ValueError(f"{len(labels.values)} labels for {nbrs.n} nodes")
    src, dst = nbrs.pairs()
    y = labels.values
    keep = y[src] == y[dst]
    src_k, dst_k = src[keep], dst[keep]
    counts = np.bincount(src_k, minlength=nbrs.n)
    ptr = np.concatenate(([0], np.cumsum(counts)))
    weights = np.repeat(np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0), counts)
    return SupportScores(ptr, dst_k, weights)


def _check_scores_fit(scores: SupportScores, nbrs: NeighborList) -> None:
    """Every scored pair must be an edge of the original neighbor sets."""
    if scores.n_anchors != nbrs.n:
        raise ValueError(f"scores cover {scores.n_anchors} anchors, graph has {nbrs.n}")
    for i in range(nbrs.n):
        seg = scores.neighbor_idx[scores.anchor_slice(i)]
        if len(seg) and not np.isin(seg, nbrs.neighbors(i)).all():
            raise ValueError(f"scores at anchor {i} reference non-neighbors")


def bgrl_loss(Z1: Tensor, H2d: Tensor) -> Tensor:
    """Node alignment: -(1/n) sum_i cos(z1_i, h2_i)."""
    if Z1.shape != H2d.shape:
        raise ValueError(f"bgrl_loss: shape mismatch {Z1.shape} vs {H2d.shape}")
    n = Z1.shape[0]
    idx = np.arange(n, dtype=np.int64)
    cos = ad.row_cosine(Z1, H2d, (idx, idx))
    return ad.scale(ad.sum_all(cos), -1.0 / n)


def _neighbor_alignment(Z1: Tensor, H2d: Tensor, pairs, weights: Tensor,
                        n: int, neighbor_term_weight: float) -> Tensor:
    """-(w_n / n) * sum over pairs of weight * cos(z1_i, h2_j)."""
    cos = ad.row_cosine(Z1, H2d, pairs)
    weighted = ad.mul(cos, weights)
    return ad.scale(ad.sum_all(weighted), -neighbor_term_weight / n)


def blnn_loss(Z1: Tensor, H2d: Tensor, nbrs: NeighborList,
              scores: SupportScores, cfg: LossConfig) -> Tensor:
    """Node term plus supportiveness-weighted neighbor term.

    With neighbor_term_weight == 0 this is exactly bgrl_loss: the
    neighbor term is skipped entirely, not multiplied by zero.
    """
    _check_scores_fit(scores, nbrs)
    node = bgrl_loss(Z1, H2d)
    if cfg.neighbor_term_weight == 0 or scores.n_pairs == 0:
        return node
    weights = Tensor(scores.weights[:, None])
    nbr = _neighbor_alignment(Z1, H2d, scores.pairs(), weights,
                              Z1.shape[0], cfg.neighbor_term_weight)
    return ad.add(node, nbr)


@dataclass
class LossTerms:
    """Assembled loss with its parts kept for logging."""

    total: Tensor
    node_term: Tensor
    neighbor_term: Tensor | None
    scores: SupportScores | None

    @property
    def node_value(self) -> float:
        return self.node_term.item()

    @property
    def neighbor_value(self) -> float:
        return 0.0 if self.neighbor_term is None else self.neighbor_term.item()


def loss_terms(cfg: LossConfig, Z1: Tensor, H2d: Tensor, H1: Tensor | None,
               nbrs: NeighborList | None, labels: Labels | None = None) -> LossTerms:
    """Build the variant's loss, returning the parts.

    H1 is the online pre-predictor representation; it anchors the
    supportiveness scores for blnn and may be omitted for other variants.
    """
    node = bgrl_loss(Z1, H2d)
    if cfg.variant == "bgrl" or cfg.neighbor_term_weight == 0:
        return LossTerms(node, node, None, None)
    if nbrs is None:
        raise ConfigError(f"variant {cfg.variant!r} needs the original-graph neighbor sets")
    n = Z1.shape[0]

    if cfg.variant == "blnn":
        if H1 is None:
            raise ConfigError("blnn needs the online pre-predictor representation H1")
        if cfg.grad_through_scores:
            src, dst = nbrs.pairs()
            if len(src) == 0:
                return LossTerms(node, node, None, None)
            e = ad.row_cosine(H1, H2d, (src, dst))
            w = ad.segment_softmax(e, nbrs.row_ptr, cfg.tau)
            nbr = _neighbor_alignment(Z1, H2d, (src, dst), w, n, cfg.neighbor_term_weight)
            scores = SupportScores(np.asarray(nbrs.row_ptr, dtype=np.int64).copy(),
                                   dst.copy(), w.data[:, 0].copy(), e.data[:, 0].copy())
            total = ad.add(node, nbr)
            return LossTerms(total, node, nbr, scores)
        scores = supportiveness(H1, H2d, nbrs, cfg.tau)
    elif cfg.variant == "bgrl_noisy":
        scores = uniform_scores(nbrs)
    else:  # bgrl_clean
        if labels is None:
            raise ConfigError("bgrl_clean requires labels")
        scores = intra_class_scores(nbrs, labels)

    if scores.n_pairs == 0:
        return LossTerms(node, node, None, scores)
    weights = Tensor(scores.weights[:, None])
    nbr = _neighbor_alignment(Z1, H2d, scores.pairs(), weights, n, cfg.neighbor_term_weight)
    total = ad.add(node, nbr)
    return LossTerms(total, node, nbr, scores)


def variant_loss(cfg: LossConfig, Z1: Tensor, H2d: Tensor, H1: Tensor | None,
                 nbrs: NeighborList | None, labels: Labels | None = None) -> Tensor:
    """Scalar loss for the configured variant (one direction)."""
    return loss_terms(cfg, Z1, H2d, H1, nbrs, labels).total


def symmetrize(loss_fn, symmetric: bool = True) -> Tensor:
    """Average of loss_fn(False) and loss_fn(True); the flag selects the
    swapped view direction. With symmetric=False only the first is used."""
    first = loss_fn(False)
    if not symmetric:
        return first
    second = loss_fn(True)
    return ad.scale(ad.add(first, second), 0.5)
