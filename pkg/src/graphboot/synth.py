"""Stochastic block model generator with Gaussian class features.

Produces balanced-class undirected graphs where intra-class pairs connect
with p_intra and inter-class pairs with p_inter, plus node features drawn
as a class mean (scaled to a target pairwise separation) with isotropic
noise. Fully determined by the seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError
from .graph import Labels, SparseGraph, from_undirected_pairs

log = logging.getLogger(__name__)


@dataclass
class SbmConfig:
    n_nodes: int
    n_classes: int
    p_intra: float
    p_inter: float
    feature_dim: int
    class_mean_separation: float = 1.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1 or self.n_classes < 1 or self.feature_dim < 1:
            raise ConfigError("n_nodes, n_classes and feature_dim must be >= 1")
        if self.n_classes > self.n_nodes:
            raise ConfigError(f"{self.n_classes} classes for {self.n_nodes} nodes")
        if not (0.0 <= self.p_inter <= self.p_intra <= 1.0):
            raise ConfigError(
                f"need 0 <= p_inter <= p_intra <= 1, got p_intra={self.p_intra}, p_inter={self.p_inter}")
        if self.class_mean_separation < 0 or self.noise_std < 0:
            raise ConfigError("separation and noise must be non-negative")


def balanced_labels(n_nodes: int, n_classes: int) -> np.ndarray:
    """Contiguous class blocks; the first n_nodes % n_classes classes get
    one extra node."""
    base, extra = divmod(n_nodes, n_classes)
    sizes = [base + (1 if c < extra else 0) for c in range(n_classes)]
    return np.repeat(np.arange(n_classes, dtype=np.int64), sizes)


def generate_sbm(cfg: SbmConfig) -> tuple[SparseGraph, Labels]:
    """Draw one graph. RNG order: class means, feature noise, edges."""
    rng = np.random.default_rng(cfg.seed)
    y = balanced_labels(cfg.n_nodes, cfg.n_classes)

    means = rng.standard_normal((cfg.n_classes, cfg.feature_dim))
    if cfg.n_classes > 1:
        dists = [np.linalg.norm(means[a] - means[b])
                 for a, b in combinations(range(cfg.n_classes), 2)]
        mean_dist = float(np.mean(dists))
        if mean_dist > 0:
            means *= cfg.class_mean_separation / mean_dist
    features = means[y] + cfg.noise_std * rng.standard_normal((cfg.n_nodes, cfg.feature_dim))

    same = y[:, None] == y[None, :]
    prob = np.where(same, cfg.p_intra, cfg.p_inter)
    draws = rng.random((cfg.n_nodes, cfg.n_nodes))
    iu, ju = np.triu_indices(cfg.n_nodes, k=1)
    keep = draws[iu, ju] < prob[iu, ju]
    pairs = np.column_stack((iu[keep], ju[keep]))

    block = cfg.n_nodes // cfg.n_classes
    expected_degree = cfg.p_intra * max(block - 1, 0) + cfg.p_inter * (cfg.n_nodes - block)
    if expected_degree < 1.0:
        log.warning("expected degree %.3f < 1; the graph will be mostly isolated nodes",
                    expected_degree)

    g = from_undirected_pairs(cfg.n_nodes, pairs, features)
    return g, Labels(y, cfg.n_classes)
